#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>

namespace macmd {

using Index = std::int64_t;

/// Dense extents for tensors of rank 1..4, stored row-major (N,C,H,W order
/// for rank-4 feature maps).
class Shape {
public:
    Shape() = default;

    Shape(std::initializer_list<Index> dims) {
        if (dims.size() < 1 || dims.size() > 4) {
            throw std::invalid_argument("Shape: rank must be between 1 and 4, got " +
                                        std::to_string(dims.size()));
        }
        rank_ = static_cast<int>(dims.size());
        int i = 0;
        for (Index d : dims) {
            if (d <= 0) {
                throw std::invalid_argument("Shape: extent of axis " + std::to_string(i) +
                                            " must be positive, got " + std::to_string(d));
            }
            dims_[i++] = d;
        }
    }

    int rank() const { return rank_; }

    Index operator[](int axis) const {
        if (axis < 0 || axis >= rank_) {
            throw std::invalid_argument("Shape: axis " + std::to_string(axis) +
                                        " out of range for rank " + std::to_string(rank_));
        }
        return dims_[axis];
    }

    Index count() const {
        Index n = 1;
        for (int i = 0; i < rank_; ++i) n *= dims_[i];
        return n;
    }

    bool operator==(const Shape& o) const {
        if (rank_ != o.rank_) return false;
        for (int i = 0; i < rank_; ++i)
            if (dims_[i] != o.dims_[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::ostringstream os;
        os << '(';
        for (int i = 0; i < rank_; ++i) {
            if (i) os << ',';
            os << dims_[i];
        }
        os << ')';
        return os.str();
    }

private:
    int rank_ = 0;
    std::array<Index, 4> dims_{1, 1, 1, 1};
};

/// Left-pads a shape to 4 axes with unit extents; used by broadcasting.
inline std::array<Index, 4> pad4(const Shape& s) {
    std::array<Index, 4> d{1, 1, 1, 1};
    for (int i = 0; i < s.rank(); ++i) d[4 - s.rank() + i] = s[i];
    return d;
}

}  // namespace macmd
