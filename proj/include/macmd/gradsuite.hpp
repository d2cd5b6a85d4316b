#pragma once

#include <functional>
#include <string>
#include <vector>

namespace macmd {

/// One named analytic-vs-numeric gradient comparison; run() returns the
/// worst relative error over the probed coordinates.
struct GradSuiteEntry {
    std::string name;
    double tolerance;
    std::function<double()> run;
};

/// The standard double-precision gradient battery: every differentiable
/// primitive, every attention/mixing block, a decoding head, both losses,
/// and the full model under its training objective.
std::vector<GradSuiteEntry> gradient_suite();

}  // namespace macmd
