#include "asymfusion/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>

#include "asymfusion/grad_suite.hpp"
#include "asymfusion/harness.hpp"
#include "asymfusion/symmetry.hpp"

namespace asymfusion {

using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config_file;
    std::string out_dir;
    std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_file, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", c.out_dir, "Output directory (default: $ASYMFUSION_OUT, then ./out)");
    sub->add_option("--set", c.sets, "Config override KEY=VALUE, e.g. net.fusion=concat")->take_all();
    sub->allow_extras();
    sub->footer("Any config field can also be given as --dotted.key VALUE, e.g. --train.epochs 5.");
}

// Leftover arguments must be --key value / --key=value pairs naming config fields.
std::vector<std::pair<std::string, std::string>> override_pairs(const std::vector<std::string>& extras) {
    static const std::set<std::string> roots = {"net", "data", "train", "seed", "inputs", "output_dir"};
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& a = extras[i];
        if (a.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + a + "'");
        std::string key = a.substr(2), value;
        if (const auto eq = key.find('='); eq != std::string::npos) {
            value = key.substr(eq + 1);
            key.resize(eq);
        } else {
            if (i + 1 >= extras.size()) throw UsageError("flag --" + key + " needs a value");
            value = extras[++i];
        }
        if (!roots.count(key.substr(0, key.find('.')))) throw UsageError("unknown flag --" + key);
        out.emplace_back(key, value);
    }
    return out;
}

RunConfig load_config(const Common& c, const CLI::App* sub) {
    json j = json::object();
    if (!c.config_file.empty()) {
        std::ifstream is(c.config_file);
        j = json::parse(is, nullptr, false);
        if (j.is_discarded()) throw ConfigError("config file " + c.config_file + " is not valid JSON");
    }
    for (const std::string& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + s + "'");
        apply_override(j, s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : override_pairs(sub->remaining())) apply_override(j, k, v);
    if (!c.out_dir.empty()) j["output_dir"] = c.out_dir;
    return run_config_from_json(j);
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream os(path);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + path.string());
}

json ceiling_json(const SynthConfig& cfg) {
    const BayesCeiling b = bayes_ceiling(cfg);
    return {{"unimodal", b.unimodal}, {"fused", b.fused}};
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
    const auto dir = resolve_output_dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    const SynthData d = generate(cfg.data);
    save_dataset(d.train, dir / "train.afsd");
    save_dataset(d.test, dir / "test.afsd");
    const json summary = {{"data", to_json(cfg)["data"]},
                          {"files", {"train.afsd", "test.afsd"}},
                          {"bayes_ceiling", ceiling_json(cfg.data)}};
    write_json(dir / "dataset.json", summary);
    out << summary.dump(2) << '\n';
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, bool quiet, std::ostream& out, std::ostream& err) {
    const auto dir = resolve_output_dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    const SynthData data = generate(cfg.data);
    AsymFusionNet net(cfg.net, cfg.seed);
    SgdOptimizer opt(cfg.train.optimizer);
    const TrainResult r = train_and_evaluate(cfg, data, net, opt, [&](int epoch, double loss) {
        if (!quiet) err << "epoch " << epoch + 1 << "/" << cfg.train.epochs << " loss " << loss << std::endl;
    });
    save_checkpoint(dir, cfg, net, opt);
    const json metrics = {{"config", to_json(cfg)},
                          {"metrics", metrics_to_json(r.metrics)},
                          {"params", params_to_json(r.params)},
                          {"epoch_loss", r.epoch_loss}};
    write_json(dir / "metrics.json", metrics);
    write_json(dir / "timing.json", {{"train_seconds", r.seconds}});
    out << json({{"metrics", metrics_to_json(r.metrics)}, {"output_dir", dir.string()}}).dump(2) << '\n';
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_file, std::ostream& out) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    const Dataset test = data_file.empty() ? generate_split(ck.config.data, Split::kTest) : load_dataset(data_file);
    if (test.classes != ck.config.net.classes) throw ConfigError("dataset class count does not match the network");
    const MetricsReport m = evaluate_model(*ck.net, test, ck.config.resolved_inputs(), 16);
    out << json({{"metrics", metrics_to_json(m)}, {"samples", test.samples.size()}}).dump(2) << '\n';
    return kExitOk;
}

int cmd_gradcheck(std::ostream& out) {
    bool ok = true;
    out << std::left << std::setw(24) << "op" << std::setw(16) << "max_rel_error" << std::setw(12) << "tolerance"
        << "result\n";
    for (const SuiteResult& r : run_gradient_suite()) {
        ok = ok && r.passed();
        out << std::setw(24) << r.report.op << std::setw(16) << std::setprecision(3) << std::scientific
            << r.report.max_rel_error << std::setw(12) << r.tolerance << (r.passed() ? "PASS" : "FAIL") << '\n';
    }
    out << std::defaultfloat;
    return ok ? kExitOk : kExitRuntime;
}

int cmd_verify_symmetry(const std::string& block, int trials, std::uint64_t seed, std::ostream& out) {
    ProbeOptions o;
    o.seed = seed;
    const auto& constructive = constructive_blocks();
    const bool by_construction = std::find(constructive.begin(), constructive.end(), block) != constructive.end();
    const SymmetryVerdict v = by_construction ? verify_symmetric_by_construction(block, trials, o)
                                              : refute_symmetry_by_search(block, 256, 0.1, o);
    out << json({{"block", v.block},
                 {"verdict", to_string(v.verdict)},
                 {"residual", v.residual},
                 {"tolerance", v.tolerance},
                 {"method", v.method},
                 {"trials", v.trials},
                 {"note", v.note}})
               .dump(2)
        << '\n';
    return kExitOk;
}

int cmd_count_params(const RunConfig& cfg, const std::string& preset, int modalities, std::ostream& out) {
    NetConfig net = preset == "resnet101-shape" ? resnet101_shape(modalities) : cfg.net;
    net.modalities = modalities;
    const ParamReport p = count_params(net);
    const std::int64_t extra = p.total - p.unimodal_total;
    json j = {{"preset", preset}, {"modalities", modalities}, {"params", params_to_json(p)}, {"extra_parameters", extra}};
    if (preset == "resnet101-shape") {
        j["reference_total"] = kResNet101ReferenceTotal;
        j["overhead_fraction"] = static_cast<double>(extra) / kResNet101ReferenceTotal;
    } else {
        j["overhead_fraction"] = p.overhead;
    }
    out << j.dump(2) << '\n';
    return kExitOk;
}

int cmd_experiment(const RunConfig& cfg, const std::string& name, int seeds, bool quiet, std::ostream& out,
                   std::ostream& err) {
    const auto dir = resolve_output_dir(cfg.output_dir);
    const ExperimentReport r = run_experiment(name, cfg, seeds, [&](const std::string& line) {
        if (!quiet) err << line << std::endl;
    });
    write_report(r, dir);
    out << report_to_csv(r);
    return kExitOk;
}

int fail(std::ostream& err, int code, const std::string& kind, const std::string& message) {
    err << json({{"error", {{"kind", kind}, {"message", message}}}, {"exit_code", code}}).dump() << '\n';
    return code;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Asymmetric multimodal fusion on synthetic segmentation data", "asymfusion"};
    app.require_subcommand(1);
    app.fallthrough(false);

    Common common;
    bool quiet = false;

    CLI::App* gen = app.add_subcommand("gen-data", "Generate and export the synthetic dataset");
    add_common(gen, common);

    CLI::App* train = app.add_subcommand("train", "Train one network and write a checkpoint");
    add_common(train, common);
    train->add_flag("--quiet", quiet, "No per-epoch progress");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on its test split");
    std::string checkpoint, data_file;
    eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
    eval->add_option("--data", data_file, "Exported dataset file to evaluate on instead");

    CLI::App* grad = app.add_subcommand("gradcheck", "Central-difference checks of every differentiable op");

    CLI::App* sym = app.add_subcommand("verify-symmetry", "Probe whether a fusion block is symmetric");
    std::string block;
    int trials = 20;
    std::uint64_t sym_seed = 1;
    std::vector<std::string> blocks = constructive_blocks();
    for (const std::string& b : searchable_blocks()) {
        if (std::find(blocks.begin(), blocks.end(), b) == blocks.end()) blocks.push_back(b);
    }
    sym->add_option("--block", block, "Fusion block")->required()->check(CLI::IsMember(blocks));
    sym->add_option("--trials", trials, "Random input pairs")->check(CLI::PositiveNumber);
    sym->add_option("--seed", sym_seed, "Probe seed");

    CLI::App* count = app.add_subcommand("count-params", "Parameter accounting");
    add_common(count, common);
    std::string preset = "config";
    int modalities = 2;
    count->add_option("--preset", preset, "config or resnet101-shape")
        ->check(CLI::IsMember({"config", "resnet101-shape"}));
    count->add_option("--modalities", modalities, "Modality count")->check(CLI::Range(1, 32));

    CLI::App* exp = app.add_subcommand("experiment", "Run an ablation grid over seeds");
    add_common(exp, common);
    std::string exp_name;
    int seeds = 3;
    exp->add_option("name", exp_name, "sharing, components or direction")
        ->required()
        ->check(CLI::IsMember({"sharing", "components", "direction"}));
    exp->add_option("--seeds", seeds, "Seeds per cell")->check(CLI::PositiveNumber);
    exp->add_flag("--quiet", quiet, "No per-run progress");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        CLI::App* failing = &app;
        for (CLI::App* s : app.get_subcommands()) failing = s;
        err << failing->help();
        return fail(err, kExitUsage, "usage", e.what());
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        if (sub == grad) return cmd_gradcheck(out);
        if (sub == sym) return cmd_verify_symmetry(block, trials, sym_seed, out);
        if (sub == eval) return cmd_eval(checkpoint, data_file, out);
        const RunConfig cfg = load_config(common, sub);
        if (sub == gen) return cmd_gen_data(cfg, out);
        if (sub == train) return cmd_train(cfg, quiet, out, err);
        if (sub == count) return cmd_count_params(cfg, preset, modalities, out);
        if (sub == exp) return cmd_experiment(cfg, exp_name, seeds, quiet, out, err);
        return fail(err, kExitUsage, "usage", "no subcommand");
    } catch (const UsageError& e) {
        err << sub->help();
        return fail(err, kExitUsage, "usage", e.what());
    } catch (const ConfigError& e) {
        return fail(err, kExitConfig, "config", e.what());
    } catch (const CheckpointError& e) {
        return fail(err, kExitRuntime, "checkpoint", e.what());
    } catch (const DatasetFormatError& e) {
        return fail(err, kExitRuntime, "dataset", e.what());
    } catch (const TrainingError& e) {
        return fail(err, kExitRuntime, "training", e.what());
    } catch (const std::exception& e) {
        return fail(err, kExitRuntime, "runtime", e.what());
    }
}

}  // namespace asymfusion
