#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mscsa/analysis.hpp"
#include "mscsa/tensor_io.hpp"

using namespace mscsa;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;

std::string iso_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

void write_run_manifest(const std::string& next_to, const std::string& command,
                        const MscsaConfig& cfg, std::uint64_t seed,
                        const std::vector<std::string>& outputs) {
    json j;
    j["command"] = command;
    j["config_hash"] = hex64(config_hash(cfg));
    j["seed"] = seed;
    j["timestamp"] = iso_timestamp();
    j["outputs"] = outputs;
    std::ofstream os(next_to + ".run.json");
    os << j.dump(2) << "\n";
}

std::string join_args(int argc, char** argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) {
        if (i) out += " ";
        out += argv[i];
    }
    return out;
}

struct ReportArgs {
    std::string config_path;
    int resolution = 0;
    double reference_total = 0;
    std::string format = "text";
    std::string output;
};

int run_report(const ReportArgs& args, const std::string& command) {
    MscsaConfig cfg = load_config_file(args.config_path);
    int resolution = args.resolution > 0 ? args.resolution : cfg.input_resolution;
    analysis::CostReport rep = analysis::report(cfg, resolution, args.reference_total);
    std::string body = args.format == "structured" ? rep.to_structured() : rep.to_text();
    if (args.output.empty()) {
        std::cout << body << "\n";
    } else {
        std::ofstream os(args.output);
        if (!os) throw ConfigError("cannot write " + args.output);
        os << body << "\n";
        write_run_manifest(args.output, command, cfg, cfg.seed, {args.output});
    }
    return kExitOk;
}

struct ForwardArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string variant;
    std::string dump;
    int batch = 1;
};

int run_forward(const ForwardArgs& args, const std::string& command) {
    MscsaConfig cfg = load_config_file(args.config_path);
    if (!args.variant.empty()) cfg.variant = variant_from_string(args.variant);
    std::uint64_t seed = args.seed_set ? args.seed : cfg.seed;
    cfg.seed = seed;
    cfg.validate();

    MscsaModel<float> model = MscsaModel<float>::build(cfg);
    StagePyramid<float> pyr =
        synth_pyramid<float>(cfg.profile, cfg.input_resolution, seed, args.batch);
    std::vector<std::string> outputs;
    if (cfg.variant == Variant::Classification) {
        Tensor<float> logits = model.forward_logits(pyr);
        std::cout << "logits " << logits.dims_str() << "\n";
        if (!args.dump.empty()) {
            io::write_tensor_file(args.dump, logits);
            outputs.push_back(args.dump);
        }
    } else {
        std::vector<Tensor<float>> fused = model.forward_dense(pyr);
        for (std::size_t i = 0; i < fused.size(); ++i) {
            std::cout << "stage" << i << " " << fused[i].dims_str() << "\n";
            if (!args.dump.empty()) {
                std::string path = args.dump + ".stage" + std::to_string(i) + ".msct";
                io::write_tensor_file(path, fused[i]);
                outputs.push_back(path);
            }
        }
    }
    if (!args.dump.empty()) write_run_manifest(args.dump, command, cfg, seed, outputs);
    return kExitOk;
}

struct GradcheckArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double tolerance = 1e-4;
    bool corrupt = false;
};

int run_gradcheck(const GradcheckArgs& args) {
    MscsaConfig cfg = args.config_path.empty() ? builtin_mini_config()
                                               : load_config_file(args.config_path);
    if (cfg.variant != Variant::Classification) {
        throw ConfigError("gradcheck drives the classification path; use a classification config");
    }
    std::uint64_t seed = args.seed_set ? args.seed : cfg.seed;
    cfg.seed = seed;

    MscsaModel<double> model = MscsaModel<double>::build(cfg);
    randomize_for_certification(model.params(), seed + 1);
    StagePyramid<double> pyr = synth_pyramid<double>(cfg.profile, cfg.input_resolution, seed, 1);
    GradcheckResult<double> res =
        gradcheck_model(model, pyr, 1e-4, 0, true, args.corrupt ? 0.5 : 0.0);
    std::cout << "checked " << res.checked_elements << " elements, max rel err "
              << std::scientific << std::setprecision(3) << res.max_rel_err << " at "
              << res.worst_name << "\n";
    if (!(res.max_rel_err < args.tolerance)) {
        std::cout << "FAIL tolerance " << args.tolerance << "\n";
        return kExitNumeric;
    }
    std::cout << "PASS tolerance " << args.tolerance << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string config_path;
    int steps = 500;
    double lr = 0.05;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_train_toy(const TrainArgs& args) {
    MscsaConfig cfg = args.config_path.empty() ? builtin_pvtv2_b1_mini_config()
                                               : load_config_file(args.config_path);
    if (cfg.variant != Variant::Classification) {
        throw ConfigError("train-toy needs a classification config");
    }
    std::uint64_t seed = args.seed_set ? args.seed : cfg.seed;
    cfg.seed = seed;

    const int samples = 8;
    MscsaModel<double> model = MscsaModel<double>::build(cfg);
    StagePyramid<double> pyr =
        synth_pyramid<double>(cfg.profile, cfg.input_resolution, seed, samples);
    std::vector<int> labels;
    for (int i = 0; i < samples; ++i) labels.push_back(i % 2);

    double final_loss;
    if (args.steps == 0) {
        final_loss = model.forward_loss(pyr, labels);
        std::cout << "step 0 loss " << std::fixed << std::setprecision(6) << final_loss << "\n";
    } else {
        std::vector<double> losses = train_toy(model, pyr, labels, args.steps, args.lr);
        for (std::size_t i = 0; i < losses.size(); ++i) {
            std::cout << "step " << i << " loss " << std::fixed << std::setprecision(6)
                      << losses[i] << "\n";
        }
        final_loss = losses.back();
    }
    std::cout << "final loss " << std::fixed << std::setprecision(6) << final_loss << "\n";
    if (!(final_loss < 0.01)) {
        std::cout << "FAIL target 0.01\n";
        return kExitNumeric;
    }
    std::cout << "PASS target 0.01\n";
    return kExitOk;
}

struct AblateArgs {
    std::string config_path;
    std::vector<std::string> strategies;
    std::string format = "text";
};

int run_ablate(const AblateArgs& args) {
    MscsaConfig cfg = load_config_file(args.config_path);
    std::vector<std::string> names = args.strategies;
    if (names.empty()) {
        names = {"parallel_dwconv", "avgpool", "cascade_dwconv", "single_dwconv"};
    }
    json rows = json::array();
    for (const std::string& name : names) {
        MscsaConfig variant_cfg = cfg;
        variant_cfg.strategy = strategy_from_string(name);
        variant_cfg.validate();
        MscsaModel<float> model = MscsaModel<float>::build(variant_cfg);
        StagePyramid<float> pyr =
            synth_pyramid<float>(variant_cfg.profile, variant_cfg.input_resolution, cfg.seed, 1);
        Tensor<float> out = model.forward_logits(pyr);

        std::int64_t down_params = 0;
        for (const auto& e : model.params().entries()) {
            if (e.name.rfind("block", 0) == 0 && e.name.find(".down") != std::string::npos) {
                down_params += e.value.numel();
            }
        }
        analysis::CostReport rep = analysis::report(variant_cfg, variant_cfg.input_resolution, 0);
        json row;
        row["strategy"] = name;
        row["output_dims"] = out.dims();
        row["kv_tokens"] =
            kv_token_count(variant_cfg.pooled_h(), variant_cfg.pooled_w(), variant_cfg.strategy);
        row["downsample_params"] = down_params;
        row["total_macs"] = rep.total_macs;
        row["total_params"] = rep.total_params;
        rows.push_back(row);
    }
    if (args.format == "structured") {
        std::cout << rows.dump(2) << "\n";
    } else {
        std::cout << std::left << std::setw(18) << "strategy" << std::right << std::setw(10)
                  << "kv_tokens" << std::setw(14) << "down_params" << std::setw(14) << "MACs"
                  << std::setw(12) << "params" << "  output\n";
        for (const auto& row : rows) {
            std::ostringstream dims;
            dims << "[";
            bool first = true;
            for (const auto& d : row["output_dims"]) {
                if (!first) dims << "x";
                dims << d.get<int>();
                first = false;
            }
            dims << "]";
            std::cout << std::left << std::setw(18) << row["strategy"].get<std::string>()
                      << std::right << std::setw(10) << row["kv_tokens"].get<std::int64_t>()
                      << std::setw(14) << row["downsample_params"].get<std::int64_t>()
                      << std::setw(14) << row["total_macs"].get<std::uint64_t>() << std::setw(12)
                      << row["total_params"].get<std::uint64_t>() << "  " << dims.str() << "\n";
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-stage cross-scale attention over synthetic backbone features"};
    app.require_subcommand(1);
    std::string command = join_args(argc, argv);

    ReportArgs report_args;
    CLI::App* report = app.add_subcommand("report", "analytic per-component MAC breakdown");
    report->add_option("--config", report_args.config_path, "model config file")->required();
    report->add_option("--resolution", report_args.resolution, "input resolution override");
    report->add_option("--reference-total", report_args.reference_total,
                       "MAC baseline for the percentage column");
    report->add_option("--format", report_args.format, "text|structured")
        ->check(CLI::IsMember({"text", "structured"}));
    report->add_option("--output", report_args.output, "write the report to a file");

    ForwardArgs fwd_args;
    CLI::App* forward = app.add_subcommand("forward", "run on a synthetic pyramid");
    forward->add_option("--config", fwd_args.config_path, "model config file")->required();
    auto* fwd_seed = forward->add_option("--seed", fwd_args.seed, "override the config seed");
    forward->add_option("--variant", fwd_args.variant, "classification|dense")
        ->check(CLI::IsMember({"classification", "dense"}));
    forward->add_option("--dump-output", fwd_args.dump, "MSCT output path (prefix for dense)");
    forward->add_option("--batch", fwd_args.batch, "batch size")->check(CLI::PositiveNumber);

    GradcheckArgs gc_args;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference certification");
    gradcheck->add_option("--config", gc_args.config_path, "config (default: built-in mini)");
    auto* gc_seed = gradcheck->add_option("--seed", gc_args.seed, "override the config seed");
    gradcheck->add_option("--tolerance", gc_args.tolerance, "max relative error allowed");
    gradcheck->add_flag("--corrupt-gradient", gc_args.corrupt,
                        "fault-injection hook: perturb one analytic gradient");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train-toy", "overfit 8 synthetic samples");
    train->add_option("--config", train_args.config_path,
                      "config (default: built-in pvtv2-b1-mini)");
    train->add_option("--steps", train_args.steps, "sgd steps")->check(CLI::NonNegativeNumber);
    train->add_option("--lr", train_args.lr, "learning rate");
    auto* tr_seed = train->add_option("--seed", train_args.seed, "override the config seed");

    AblateArgs ablate_args;
    CLI::App* ablate = app.add_subcommand("ablate", "compare downsampling strategies");
    ablate->add_option("--config", ablate_args.config_path, "model config file")->required();
    ablate->add_option("--strategies", ablate_args.strategies,
                       "subset to run (default: all four)");
    ablate->add_option("--format", ablate_args.format, "text|structured")
        ->check(CLI::IsMember({"text", "structured"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        fwd_args.seed_set = fwd_seed->count() > 0;
        gc_args.seed_set = gc_seed->count() > 0;
        train_args.seed_set = tr_seed->count() > 0;
        if (report->parsed()) return run_report(report_args, command);
        if (forward->parsed()) return run_forward(fwd_args, command);
        if (gradcheck->parsed()) return run_gradcheck(gc_args);
        if (train->parsed()) return run_train_toy(train_args);
        if (ablate->parsed()) return run_ablate(ablate_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
