#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "stag/accounting.hpp"
#include "stag/config.hpp"
#include "stag/dataset.hpp"
#include "stag/error.hpp"
#include "stag/experiment.hpp"
#include "stag/params.hpp"
#include "stag/training.hpp"
#include "stag/verify.hpp"

namespace {

struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool deterministic = false;
    std::string precision;
    std::string out_dir;
};

stag::ExperimentConfig effective_config(const GlobalOpts& g) {
    stag::ExperimentConfig cfg;
    if (!g.config_path.empty()) cfg = stag::load_config(g.config_path);
    if (g.seed_set) cfg.seeds = {g.seed};
    if (g.deterministic) cfg.deterministic = true;
    if (!g.precision.empty()) cfg.precision = stag::precision_from_string(g.precision);
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t comma = s.find(',', start);
        const std::size_t end = comma == std::string::npos ? s.size() : comma;
        if (end > start) out.push_back(s.substr(start, end - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

int cmd_generate(const stag::ExperimentConfig& cfg) {
    const std::string train_dir = cfg.out_dir + "/data/train";
    const std::string test_dir = cfg.out_dir + "/data/test";
    stag::generate_synthetic(train_dir, cfg.classes, cfg.per_class_train, cfg.points,
                             cfg.noise_sigma, stag::RngStream(cfg.backbone_seed, "dataset/train"));
    stag::generate_synthetic(test_dir, cfg.classes, cfg.per_class_test, cfg.points,
                             cfg.noise_sigma, stag::RngStream(cfg.backbone_seed, "dataset/test"));
    std::printf("wrote %s/manifest.tsv (%zu clouds)\n", train_dir.c_str(),
                cfg.classes.size() * static_cast<std::size_t>(cfg.per_class_train));
    std::printf("wrote %s/manifest.tsv (%zu clouds)\n", test_dir.c_str(),
                cfg.classes.size() * static_cast<std::size_t>(cfg.per_class_test));
    return 0;
}

int cmd_train(const stag::ExperimentConfig& cfg) {
    const stag::ExperimentResult result = stag::run_experiment(cfg);
    for (const stag::SeedResult& sr : result.seeds)
        std::printf("seed %llu: final test_acc %.6f\n",
                    static_cast<unsigned long long>(sr.seed), sr.final_test_acc);
    std::printf("mean test_acc %.6f\n", result.mean_test_acc);
    std::printf("outputs in %s\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_evaluate(const stag::ExperimentConfig& cfg, const std::string& weights) {
    const stag::StagConfig sc = stag::stag_config_of(cfg);
    const stag::DataSplit data = stag::prepare_data(cfg);
    stag::Model model =
        stag::build_model(cfg.backbone, sc, static_cast<int>(data.label_names.size()),
                          cfg.train.strategy, cfg.backbone_seed, cfg.seeds.front());
    if (!weights.empty()) {
        for (auto& [name, value] : stag::load_params(weights)) {
            if (!model.store.has(name))
                throw stag::ConfigError("weight record " + name + " is not a model parameter");
            stag::Param& p = model.store.at(name);
            if (!p.value.same_shape(value))
                throw stag::DimensionError("weight record " + name +
                                           " does not match the model shape");
            p.value = value;
        }
    }
    const double acc = stag::evaluate_accuracy(model, data.test, cfg.precision);
    std::printf("test_acc %.6f over %zu clouds\n", acc, data.test.size());
    return 0;
}

int cmd_sweep(const stag::ExperimentConfig& cfg, const std::string& axis,
              const std::string& values) {
    const std::vector<std::string> vals = split_csv(values);
    const std::vector<stag::SweepRow> rows = stag::sweep(cfg, axis, vals);
    std::fputs(stag::sweep_table_text(axis, rows).c_str(), stdout);
    std::printf("table written to %s/sweep_%s.csv\n", cfg.out_dir.c_str(), axis.c_str());
    return 0;
}

int cmd_cost(const stag::ExperimentConfig& cfg, bool as_csv) {
    using stag::Strategy;
    std::vector<Strategy> strategies = {Strategy::Full, Strategy::HeadOnly, Strategy::StagStd,
                                        Strategy::StagSl};
    if (cfg.train.strategy == Strategy::StagCustom) strategies.push_back(Strategy::StagCustom);
    const int num_classes = static_cast<int>(cfg.classes.size());
    std::vector<stag::CostReport> reports;
    for (Strategy strat : strategies) {
        stag::ExperimentConfig c = cfg;
        c.train.strategy = strat;
        if (strat != Strategy::StagCustom) c.A = -1;  // std and sl pin A
        reports.push_back(stag::cost_report(c.backbone, stag::stag_config_of(c), num_classes,
                                            strat, c.precision));
    }
    const std::string table =
        as_csv ? stag::cost_table_csv(reports) : stag::cost_table_text(reports);
    std::fputs(table.c_str(), stdout);
    return 0;
}

int cmd_verify(const stag::ExperimentConfig& cfg) {
    const std::vector<stag::SuiteResult> results = stag::run_verify(cfg.out_dir + "/verify_tmp");
    int failed = 0;
    for (const stag::SuiteResult& r : results) {
        if (r.passed) {
            std::printf("PASS %s\n", r.name.c_str());
        } else {
            std::printf("FAIL %s: %s\n", r.name.c_str(), r.detail.c_str());
            ++failed;
        }
    }
    std::printf("%d/%zu suites passed\n", static_cast<int>(results.size()) - failed,
                results.size());
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Side-tuning playground for frozen point-cloud transformers"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "Experiment config (flat JSON)");
    auto* seed_opt = app.add_option("--seed", g.seed, "Replace the config's seed list");
    app.add_flag("--deterministic", g.deterministic, "Byte-reproducible outputs");
    app.add_option("--precision", g.precision, "Value precision")
        ->check(CLI::IsMember({"single", "double"}));
    app.add_option("--out", g.out_dir, "Output directory");

    auto* gen = app.add_subcommand("generate", "Write the synthetic dataset");
    auto* train = app.add_subcommand("train", "Fine-tune one strategy across seeds");
    auto* evaluate = app.add_subcommand("evaluate", "Score a model on the test split");
    std::string weights;
    evaluate->add_option("--weights", weights, "Tunable weight file (default: fresh init)");
    auto* sweep_cmd = app.add_subcommand("sweep", "Rerun the experiment along one axis");
    std::string axis, values;
    sweep_cmd->add_option("--axis", axis, "One of A, k, refine_fn")->required();
    sweep_cmd->add_option("--values", values, "Comma-separated axis values")->required();
    auto* cost = app.add_subcommand("cost", "Analytic parameter/FLOP/memory comparison");
    bool cost_csv = false;
    cost->add_flag("--csv", cost_csv, "Emit CSV instead of the aligned table");
    auto* verify = app.add_subcommand("verify", "Run the bundled property suites");
    for (CLI::App* sub : {gen, train, evaluate, sweep_cmd, cost, verify}) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);
    g.seed_set = seed_opt->count() > 0;

    try {
        const stag::ExperimentConfig cfg = effective_config(g);
        if (gen->parsed()) return cmd_generate(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (evaluate->parsed()) return cmd_evaluate(cfg, weights);
        if (sweep_cmd->parsed()) return cmd_sweep(cfg, axis, values);
        if (cost->parsed()) return cmd_cost(cfg, cost_csv);
        if (verify->parsed()) return cmd_verify(cfg);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "stag error: %s\n", e.what());
        return 1;
    }
    return 0;
}
