#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mammil/config.hpp"
#include "mammil/gradcheck_suite.hpp"
#include "mammil/manifest.hpp"
#include "mammil/preprocess.hpp"
#include "mammil/visualize.hpp"

namespace fs = std::filesystem;
using namespace mammil;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitVerification = 4;

struct Splits {
    std::vector<CaseRecord> train, val, test;
};

Splits load_dataset(const RunConfig& cfg) {
    Splits s;
    if (cfg.has_synthetic) {
        SyntheticDataset ds = generate_synthetic(cfg.synthetic);
        s.train = std::move(ds.train);
        s.val = std::move(ds.val);
        s.test = std::move(ds.test);
    } else if (!cfg.train_manifest.empty()) {
        s.train = load_manifest(cfg.train_manifest);
        if (!cfg.val_manifest.empty()) s.val = load_manifest(cfg.val_manifest);
        if (!cfg.test_manifest.empty()) s.test = load_manifest(cfg.test_manifest);
    } else {
        throw ConfigError("config: no dataset (set dataset.manifest or dataset.synthetic.*)");
    }
    return s;
}

void save_meta(const std::string& path, const RunConfig& cfg, std::int64_t epoch) {
    std::ofstream os(path, std::ios::trunc);
    os << "pooling = " << to_string(cfg.model.pooling) << "\n";
    os << "seeds.init = " << cfg.seed_init << "\n";
    os << "seeds.data = " << cfg.seed_data << "\n";
    os << "seeds.shuffle = " << cfg.seed_shuffle << "\n";
    os << "epoch = " << epoch << "\n";
}

std::string meta_value(const std::string& path, const std::string& key) {
    std::ifstream is(path);
    if (!is) throw DataError("checkpoint: missing sidecar " + path);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos && line.substr(0, eq) == key) return line.substr(eq + 3);
    }
    throw DataError("checkpoint sidecar " + path + ": missing key '" + key + "'");
}

int cmd_generate(const std::string& config_path, const std::string& out_dir, bool force) {
    RunConfig cfg = parse_run_config(config_path);
    if (!cfg.has_synthetic)
        throw ConfigError("generate: config has no dataset.synthetic.* section");
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force)
        throw DataError("generate: output directory " + out_dir +
                        " is not empty (use --force to overwrite)");
    fs::create_directories(out_dir);
    SyntheticDataset ds = generate_synthetic(cfg.synthetic);
    const fs::path base(out_dir);
    write_manifest(ds.train, (base / "manifest_train.csv").string(), "images");
    write_manifest(ds.val, (base / "manifest_val.csv").string(), "images");
    write_manifest(ds.test, (base / "manifest_test.csv").string(), "images");
    std::vector<CaseRecord> all;
    for (auto* split : {&ds.train, &ds.val, &ds.test})
        for (auto& c : *split) all.push_back(std::move(c));
    write_manifest(all, (base / "manifest.csv").string(), "images");
    std::ofstream prov(base / "provenance.txt", std::ios::trunc);
    prov << format_run_config(cfg);
    std::cout << "generated " << all.size() << " cases under " << out_dir << "\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    RunConfig cfg = parse_run_config(config_path);
    Splits splits = load_dataset(cfg);
    if (splits.val.empty())
        throw ConfigError("train: no validation split (synthetic dataset or dataset.val_manifest)");
    preprocess_cases(splits.train, cfg.model.image_h, cfg.model.image_w);
    preprocess_cases(splits.val, cfg.model.image_h, cfg.model.image_w);

    fs::create_directories(out_dir);
    CaseModel model(cfg.model);
    std::ofstream log((fs::path(out_dir) / "train.log").string(), std::ios::trunc);
    TrainResult result = train(model, splits.train, splits.val, cfg.training, &log);
    const std::string ckpt = (fs::path(out_dir) / "best.ckpt").string();
    save_checkpoint(ckpt, result.best_params);
    save_meta(ckpt + ".meta", cfg, result.best_epoch);
    std::cout << "best epoch " << result.best_epoch << " val_auc " << result.best_val_auc
              << " val_f1 " << result.best_val_f1 << "\n";
    std::cout << "checkpoint " << ckpt << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt,
             const std::string& data_manifest, const std::string& out_path, int visualize) {
    RunConfig cfg = parse_run_config(config_path);
    const std::string meta_spec = meta_value(ckpt + ".meta", "pooling");
    if (meta_spec != to_string(cfg.model.pooling))
        throw ConfigError("eval: checkpoint was trained with pooling '" + meta_spec +
                          "' but config says '" + to_string(cfg.model.pooling) + "'");

    std::vector<CaseRecord> cases;
    if (!data_manifest.empty()) {
        cases = load_manifest(data_manifest);
    } else {
        Splits splits = load_dataset(cfg);
        cases = std::move(splits.test);
        if (cases.empty()) throw ConfigError("eval: no test split; pass --data <manifest>");
    }
    preprocess_cases(cases, cfg.model.image_h, cfg.model.image_w);

    CaseModel model(cfg.model);
    model.load_parameters(load_checkpoint(ckpt));
    const auto evals = evaluate_cases(model, cases);
    const MetricsReport report = build_metrics_report(evals, cfg.roi_match_threshold);
    const std::string text = format_metrics_report(report);
    if (out_path.empty()) {
        std::cout << text;
    } else {
        if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty())
            fs::create_directories(parent);
        std::ofstream os(out_path, std::ios::trunc);
        os << text;
        std::cout << "report " << out_path << "\n";
    }
    if (visualize > 0) {
        const fs::path viz_base =
            out_path.empty() ? fs::path("viz") : fs::path(out_path).parent_path() / "viz";
        const int n = std::min<int>(visualize, static_cast<int>(cases.size()));
        for (int i = 0; i < n; ++i)
            emit_case_visualization(model, cases[static_cast<std::size_t>(i)],
                                    (viz_base / cases[static_cast<std::size_t>(i)].case_id).string());
        std::cout << "visualizations under " << viz_base.string() << "\n";
    }
    return kExitOk;
}

int cmd_gradcheck(double eps, double threshold, bool inject_fault) {
    const auto entries = run_gradcheck_suite(eps, threshold, inject_fault);
    bool all_ok = true;
    for (const auto& e : entries) {
        std::cout << (e.ok ? "ok   " : "FAIL ") << e.path << " max_rel_error=" << e.max_rel_error
                  << "\n";
        all_ok = all_ok && e.ok;
    }
    if (!all_ok) {
        std::cout << "gradcheck: FAILED\n";
        return kExitVerification;
    }
    std::cout << "gradcheck: all paths below " << threshold << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Case-level mammography MIL: synthetic data, training, evaluation"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run", ckpt, data_manifest, report_path;
    bool force = false, inject_fault = false;
    int visualize = 0;
    double eps = 1e-5, threshold = 1e-4;

    auto* gen = app.add_subcommand("generate", "Emit a synthetic dataset as manifest + P5 images");
    gen->add_option("--config", config_path, "run config file")->required();
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_flag("--force", force, "overwrite a non-empty output directory");

    auto* tr = app.add_subcommand("train", "Train a model per the run config");
    tr->add_option("--config", config_path, "run config file")->required();
    tr->add_option("--out", out_dir, "output directory for checkpoint and log");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint and write a metrics report");
    ev->add_option("--config", config_path, "run config file")->required();
    ev->add_option("--ckpt", ckpt, "checkpoint path")->required();
    ev->add_option("--data", data_manifest, "manifest to evaluate (default: config test split)");
    ev->add_option("--out", report_path, "report file (default: stdout)");
    ev->add_option("--visualize", visualize, "emit visualizations for the first N cases");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of all gradient paths");
    gc->add_option("--eps", eps, "central-difference step");
    gc->add_option("--threshold", threshold, "max relative error to accept");
    gc->add_flag("--inject-gradient-fault", inject_fault,
                 "add a deliberately wrong gradient (harness self-test)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the parse error
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_generate(config_path, out_dir, force);
        if (tr->parsed()) return cmd_train(config_path, out_dir);
        if (ev->parsed()) return cmd_eval(config_path, ckpt, data_manifest, report_path, visualize);
        if (gc->parsed()) return cmd_gradcheck(eps, threshold, inject_fault);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const VerificationError& e) {
        std::cerr << "verification error: " << e.what() << "\n";
        return kExitVerification;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
