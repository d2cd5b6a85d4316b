// Command-line front end: dataset synthesis, training, evaluation, single-
// image prediction, the gradient battery, and the parameter/MAC profiler.
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "macmd/checkpoint.hpp"
#include "macmd/dataset.hpp"
#include "macmd/errors.hpp"
#include "macmd/gradsuite.hpp"
#include "macmd/profile.hpp"
#include "macmd/trainer.hpp"

namespace {

using namespace macmd;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;

int run_gen_data(const SyntheticSpec& spec, const std::string& out_dir) {
    const std::string manifest = gen_dataset(spec, out_dir);
    std::cout << "wrote " << spec.count << " image/mask pairs, manifest " << manifest << "\n";
    return 0;
}

int run_train(TrainConfig cfg, const std::string& data_dir) {
    const Dataset ds = load_dataset(data_dir);
    const TrainResult result = train_model(cfg, ds, std::cout);
    std::cout << std::setprecision(6) << std::fixed << "best dsc " << result.best_dsc
              << " at epoch " << result.best_epoch;
    if (!cfg.checkpoint_path.empty()) std::cout << ", checkpoint " << cfg.checkpoint_path;
    std::cout << "\n";
    return 0;
}

/// The architecture a checkpoint describes.
ModelConfig checkpoint_config(const std::string& ckpt_path) {
    return infer_model_config(read_checkpoint(ckpt_path));
}

int run_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& report_path) {
    MacmdModel<float> model(checkpoint_config(ckpt_path), 0);
    load_checkpoint(model.store(), ckpt_path);
    const Dataset ds = load_dataset(data_dir);
    const EvalResult result = evaluate_model(model, ds);
    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("eval: cannot write " + report_path);
        out << result.report_tsv;
        if (!out) throw DataError("eval: write failed for " + report_path);
    }
    std::cout << result.report_tsv;
    return 0;
}

int run_predict(const std::string& ckpt_path, const std::string& image_path,
                const std::string& out_path) {
    MacmdModel<float> model(checkpoint_config(ckpt_path), 0);
    load_checkpoint(model.store(), ckpt_path);
    const PgmImage img = read_pgm(image_path);
    if (img.height % 32 != 0 || img.width % 32 != 0)
        throw DataError("predict: image extents must be multiples of 32, got " +
                        std::to_string(img.height) + "x" + std::to_string(img.width));

    model.set_training(false);
    NoGradGuard inference;
    auto x = Tensor<float>::zeros(Shape{1, 3, img.height, img.width});
    float* v = x.data();
    const Index plane = img.height * img.width;
    for (Index i = 0; i < plane; ++i) {
        const float g = static_cast<float>(img.pixels[static_cast<std::size_t>(i)]) / 255.0f;
        v[i] = g;
        v[plane + i] = g;
        v[2 * plane + i] = g;
    }
    const auto maps = model(x);
    const MaskBatch pred = argmax_labels(maps[0]);

    PgmImage out{img.width, img.height,
                 std::vector<std::uint8_t>(static_cast<std::size_t>(plane))};
    for (Index i = 0; i < plane; ++i)
        out.pixels[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>(pred.labels[static_cast<std::size_t>(i)]);
    write_pgm(out_path, out);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int run_gradcheck(const std::string& only) {
    auto entries = gradient_suite();
    if (!only.empty()) {
        std::erase_if(entries, [&](const GradSuiteEntry& e) { return e.name != only; });
        if (entries.empty()) {
            std::cerr << "gradcheck: no module named \"" << only << "\"\n";
            return kExitUsage;
        }
    }
    bool all_ok = true;
    for (const auto& entry : entries) {
        const double err = entry.run();
        const bool ok = err < entry.tolerance;
        all_ok = all_ok && ok;
        std::cout << std::left << std::setw(20) << entry.name << std::scientific
                  << std::setprecision(3) << err << "  (tol " << entry.tolerance << ")  "
                  << (ok ? "PASS" : "FAIL") << "\n";
    }
    return all_ok ? 0 : 1;
}

int run_params(bool full_scale, Index input_size, Index classes) {
    ModelConfig mc;
    if (full_scale) mc.channels = {64, 128, 320, 512};
    mc.num_classes = classes;
    std::cout << profile_text(profile_rows(mc, input_size, input_size));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-scale attention segmentation decoder"};
    app.require_subcommand(1);

    SyntheticSpec spec;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-data", "Synthesize a deterministic image/mask dataset");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--count", spec.count, "Number of image/mask pairs");
    gen->add_option("--size", spec.size, "Square image extent");
    gen->add_option("--classes", spec.num_classes, "Class count including background");
    gen->add_option("--seed", spec.seed, "Generator seed");
    gen->add_option("--min-shapes", spec.min_shapes, "Fewest shapes per image");
    gen->add_option("--max-shapes", spec.max_shapes, "Most shapes per image");
    gen->add_option("--noise", spec.noise, "Per-pixel intensity noise bound");

    TrainConfig tc;
    tc.epochs = 300;
    std::string train_data;
    std::vector<Index> channels;
    double alpha = 0, beta = 0;
    auto* train = app.add_subcommand("train", "Train on a generated dataset");
    train->add_option("--data", train_data, "Dataset directory")->required();
    train->add_option("--out", tc.checkpoint_path, "Checkpoint path")->required();
    train->add_option("--epochs", tc.epochs, "Training epochs");
    train->add_option("--batch", tc.batch_size, "Batch size");
    train->add_option("--lr", tc.lr, "Peak learning rate");
    train->add_option("--lr-min", tc.lr_min, "Final learning rate");
    train->add_option("--wd", tc.weight_decay, "Weight decay");
    auto* alpha_opt = train->add_option("--alpha", alpha, "Cross-entropy weight");
    auto* beta_opt = train->add_option("--beta", beta, "Dice weight");
    train->add_option("--seed", tc.seed, "Run seed");
    train->add_option("--size", tc.expect_size, "Expected image extent (0 = any)");
    train->add_option("--classes", tc.expect_classes, "Expected class count (0 = dataset's)");
    train->add_option("--channels", channels, "Stage widths a,b,c,d")->delimiter(',');
    train->add_option("--val-fraction", tc.val_fraction, "Held-out fraction for model selection");
    train->add_flag("--flip", tc.flip, "Random horizontal flips");

    std::string eval_ckpt, eval_data, eval_report;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
    eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
    eval_cmd->add_option("--report", eval_report, "Report TSV path");

    std::string pred_ckpt, pred_image, pred_out;
    auto* predict = app.add_subcommand("predict", "Segment one image");
    predict->add_option("--ckpt", pred_ckpt, "Checkpoint path")->required();
    predict->add_option("--image", pred_image, "Input image (binary PGM)")->required();
    predict->add_option("--out", pred_out, "Output label mask (binary PGM)")->required();

    std::string gc_module;
    auto* gradcheck = app.add_subcommand("gradcheck", "Run the gradient battery");
    gradcheck->add_option("--module", gc_module, "Run a single named check");

    bool full_scale = false;
    Index input_size = 224, param_classes = 3;
    auto* params = app.add_subcommand("params", "Print the parameter/MAC profile");
    params->add_flag("--full-scale", full_scale, "Stage widths 64,128,320,512");
    params->add_option("--input-size", input_size, "Square input extent");
    params->add_option("--classes", param_classes, "Class count");

    try {
        app.parse(argc, argv);

        if (*gen) return run_gen_data(spec, gen_out);
        if (*train) {
            if (!channels.empty()) {
                if (channels.size() != 4)
                    throw CLI::ValidationError("--channels", "expected four stage widths");
                for (std::size_t i = 0; i < 4; ++i) tc.channels[i] = channels[i];
            }
            if (alpha_opt->count() > 0) tc.alpha = alpha;
            if (beta_opt->count() > 0) tc.beta = beta;
            return run_train(tc, train_data);
        }
        if (*eval_cmd) return run_eval(eval_ckpt, eval_data, eval_report);
        if (*predict) return run_predict(pred_ckpt, pred_image, pred_out);
        if (*gradcheck) return run_gradcheck(gc_module);
        if (*params) return run_params(full_scale, input_size, param_classes);
        return kExitUsage;  // unreachable with require_subcommand
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
