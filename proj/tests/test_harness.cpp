#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "asymfusion/cli.hpp"
#include "asymfusion/harness.hpp"

namespace asymfusion {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

RunConfig tiny_run() {
    RunConfig c;
    c.net.stem_width = 4;
    c.net.stages = {{1, 8, 4}, {1, 8, 4}};
    c.net.decoder_width = 4;
    c.data.height = 8;
    c.data.width = 8;
    c.data.regions = 4;
    c.data.train_size = 8;
    c.data.test_size = 4;
    c.train.epochs = 1;
    c.train.batch_size = 4;
    return c;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "asymfusion_harness_test" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

json read_json(const fs::path& p) {
    std::ifstream is(p);
    return json::parse(is);
}

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun cli(std::vector<std::string> args) {
    args.insert(args.begin(), "asymfusion");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

// Trains briefly so momentum buffers and running statistics are non-trivial.
struct Trained {
    RunConfig cfg = tiny_run();
    SynthData data = generate(cfg.data);
    AsymFusionNet net{cfg.net, cfg.seed};
    SgdOptimizer opt{cfg.train.optimizer};
    Trained() { train_and_evaluate(cfg, data, net, opt); }
};

Tensor fixed_forward(AsymFusionNet& net, const Dataset& d) {
    const std::vector<std::size_t> idx = {0, 1, 2};
    auto [x, labels] = stack(d, idx);
    return net.predict(x);
}

TEST(RunConfigJson, RoundTrip) {
    RunConfig c = tiny_run();
    c.net.fusion = FusionMethod::kAttention;
    c.net.direction = Direction::kTwoToOne;
    c.net.sharing = Sharing::kSharedNorms;
    c.data.offsets = {0.1, -0.2};
    c.train.loss.distill_weight = 0.25;
    c.seed = 17;
    const json j = to_json(c);
    EXPECT_EQ(to_json(run_config_from_json(j)).dump(), j.dump());
}

TEST(RunConfigJson, MissingKeysKeepDefaults) {
    const RunConfig c = run_config_from_json(json::object());
    EXPECT_EQ(to_json(c).dump(), to_json(RunConfig{}).dump());
}

TEST(RunConfigJson, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(run_config_from_json({{"nett", json::object()}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"net", {{"widht", 3}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"net", {{"fusion", "sum"}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"train", {{"epochs", "many"}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"data", {{"regions", 100000}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"net", {{"modalities", 3}}}}), ConfigError);  // data has 2
    EXPECT_THROW(run_config_from_json({{"net", {{"classes", 4}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"data", {{"height", 31}}}}), ConfigError);  // odd, net downsamples once
    EXPECT_THROW(run_config_from_json({{"inputs", {0, 2}}}), ConfigError);
}

TEST(RunConfigJson, InputsSelectModalities) {
    const RunConfig c = run_config_from_json({{"inputs", {1}}, {"net", {{"modalities", 1}}}});
    EXPECT_EQ(c.resolved_inputs(), std::vector<int>{1});
    EXPECT_EQ(RunConfig{}.resolved_inputs(), (std::vector<int>{0, 1}));
}

TEST(Overrides, ParseJsonOrString) {
    json j = json::object();
    apply_override(j, "train.epochs", "5");
    apply_override(j, "net.fusion", "concat");
    apply_override(j, "net.shift", "false");
    apply_override(j, "data.offsets", "[0.5, 0]");
    apply_override(j, "seed", "9");
    EXPECT_EQ(j["train"]["epochs"], 5);
    EXPECT_EQ(j["net"]["fusion"], "concat");
    EXPECT_EQ(j["net"]["shift"], false);
    EXPECT_EQ(j["data"]["offsets"], json({0.5, 0}));
    const RunConfig c = run_config_from_json(j);
    EXPECT_EQ(c.train.epochs, 5);
    EXPECT_EQ(c.net.fusion, FusionMethod::kConcat);
    EXPECT_FALSE(c.net.shift);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_THROW(apply_override(j, "net..x", "1"), ConfigError);
}

TEST(OutputDir, FlagThenEnvThenDefault) {
    ::setenv("ASYMFUSION_OUT", "/tmp/from_env", 1);
    EXPECT_EQ(resolve_output_dir("explicit"), fs::path("explicit"));
    EXPECT_EQ(resolve_output_dir(""), fs::path("/tmp/from_env"));
    ::unsetenv("ASYMFUSION_OUT");
    EXPECT_EQ(resolve_output_dir(""), fs::path("out"));
}

TEST(Training, SameConfigGivesIdenticalMetricsJson) {
    const RunConfig cfg = tiny_run();
    std::string dumps[2];
    for (auto& d : dumps) {
        const SynthData data = generate(cfg.data);
        AsymFusionNet net(cfg.net, cfg.seed);
        SgdOptimizer opt(cfg.train.optimizer);
        const TrainResult r = train_and_evaluate(cfg, data, net, opt);
        d = json({{"m", metrics_to_json(r.metrics)}, {"l", r.epoch_loss}}).dump();
    }
    EXPECT_EQ(dumps[0], dumps[1]);
}

TEST(Training, PolyScheduleReachesZeroAtTheEnd) {
    Trained t;
    // 8 samples, batch 4, 1 epoch: two steps.
    EXPECT_EQ(t.opt.iteration(), 2);
    EXPECT_EQ(t.opt.lr_at(2, 2), 0.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Trained t;
    const fs::path dir = fresh_dir("roundtrip");
    save_checkpoint(dir, t.cfg, t.net, t.opt);
    LoadedCheckpoint ck = load_checkpoint(dir);

    EXPECT_EQ(to_json(ck.config).dump(), to_json(t.cfg).dump());
    EXPECT_EQ(ck.optimizer.iteration(), t.opt.iteration());
    const auto a = t.net.parameters();
    const auto b = ck.net->parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i]->name, b[i]->name);
        EXPECT_TRUE(a[i]->value == b[i]->value) << a[i]->name;
    }
    const auto ba = t.net.buffers();
    const auto bb = ck.net->buffers();
    ASSERT_EQ(ba.size(), bb.size());
    for (std::size_t i = 0; i < ba.size(); ++i) EXPECT_TRUE(*ba[i].second == *bb[i].second) << ba[i].first;
    ASSERT_EQ(ck.optimizer.velocity().size(), t.opt.velocity().size());
    for (const auto& [name, v] : t.opt.velocity()) EXPECT_TRUE(ck.optimizer.velocity().at(name) == v) << name;

    EXPECT_TRUE(fixed_forward(t.net, t.data.test) == fixed_forward(*ck.net, t.data.test));
}

TEST(Checkpoint, ResumedTrainingMatchesUninterrupted) {
    Trained a;
    const fs::path dir = fresh_dir("resume");
    save_checkpoint(dir, a.cfg, a.net, a.opt);
    LoadedCheckpoint ck = load_checkpoint(dir);

    const std::vector<std::size_t> idx = {0, 1, 2, 3};
    auto [x, labels] = stack(a.data.train, idx);
    const Batch batch{x, labels};
    const double l1 = train_step(a.net, a.opt, batch, a.cfg.train.loss, 0.01).total;
    const double l2 = train_step(*ck.net, ck.optimizer, batch, ck.config.train.loss, 0.01).total;
    EXPECT_EQ(l1, l2);
    EXPECT_TRUE(fixed_forward(a.net, a.data.test) == fixed_forward(*ck.net, a.data.test));
}

TEST(Checkpoint, ManifestCountsMatchParamReport) {
    Trained t;
    const fs::path dir = fresh_dir("manifest");
    save_checkpoint(dir, t.cfg, t.net, t.opt);
    const json m = read_json(dir / kCheckpointManifest);
    std::int64_t params = 0, buffers = 0, velocity = 0;
    std::size_t param_tensors = 0;
    for (const json& e : m["tensors"]) {
        const auto s = e["shape"].get<std::vector<std::int64_t>>();
        const std::int64_t n = s[0] * s[1] * s[2] * s[3];
        if (e["group"] == "param") {
            params += n;
            ++param_tensors;
        } else if (e["group"] == "buffer") {
            buffers += n;
        } else {
            velocity += n;
        }
    }
    const ParamReport report = count_params(t.net);
    EXPECT_EQ(params, report.total);
    EXPECT_EQ(buffers, report.buffers);
    EXPECT_EQ(velocity, report.total);
    EXPECT_EQ(param_tensors, t.net.parameters().size());
    EXPECT_EQ(m["tensors"].size(), 2 * t.net.parameters().size() + t.net.buffers().size());
    EXPECT_EQ(m["payload_bytes"].get<std::int64_t>(), 8 * (params + buffers + velocity));
    EXPECT_EQ(static_cast<std::int64_t>(fs::file_size(dir / kCheckpointPayload)), 8 * (params + buffers + velocity));
}

TEST(Checkpoint, TruncatedPayloadNamesTheTensor) {
    Trained t;
    const fs::path dir = fresh_dir("truncated");
    save_checkpoint(dir, t.cfg, t.net, t.opt);
    const json m = read_json(dir / kCheckpointManifest);
    const json& last = m["tensors"].back();
    fs::resize_file(dir / kCheckpointPayload, fs::file_size(dir / kCheckpointPayload) - 8);
    try {
        load_checkpoint(dir);
        FAIL() << "expected CheckpointError";
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find(last["name"].get<std::string>()), std::string::npos) << e.what();
    }
}

TEST(Checkpoint, ShapeAndOffsetCorruptionNamesTheTensor) {
    Trained t;
    const fs::path dir = fresh_dir("corrupt");
    save_checkpoint(dir, t.cfg, t.net, t.opt);
    const json good = read_json(dir / kCheckpointManifest);

    json bad = good;
    bad["tensors"][3]["shape"][1] = 99;
    std::ofstream(dir / kCheckpointManifest) << bad.dump();
    try {
        load_checkpoint(dir);
        FAIL() << "expected CheckpointError";
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find(good["tensors"][3]["name"].get<std::string>()), std::string::npos);
    }

    bad = good;
    bad["tensors"][2]["offset"] = bad["tensors"][2]["offset"].get<std::int64_t>() + 8;
    std::ofstream(dir / kCheckpointManifest) << bad.dump();
    try {
        load_checkpoint(dir);
        FAIL() << "expected CheckpointError";
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find(good["tensors"][2]["name"].get<std::string>()), std::string::npos);
    }
}

TEST(Checkpoint, VersionIsChecked) {
    Trained t;
    const fs::path dir = fresh_dir("version");
    save_checkpoint(dir, t.cfg, t.net, t.opt);
    json m = read_json(dir / kCheckpointManifest);
    m["version"] = kCheckpointVersion + 1;
    std::ofstream(dir / kCheckpointManifest) << m.dump();
    EXPECT_THROW(load_checkpoint(dir), CheckpointError);
    fs::remove(dir / kCheckpointManifest);
    EXPECT_THROW(load_checkpoint(dir), CheckpointError);
}

TEST(Experiment, GridShapes) {
    const RunConfig base = tiny_run();
    const auto sharing = experiment_grid("sharing", base);
    ASSERT_EQ(sharing.size(), 3u);
    EXPECT_EQ(sharing[0].config.net.sharing, Sharing::kIndividual);

    const auto comp = experiment_grid("components", base);
    ASSERT_EQ(comp.size(), 9u);
    EXPECT_EQ(comp.back().row, "cross-skip-only");
    EXPECT_TRUE(comp.back().config.net.cross_skip_only);
    int distill = 0;
    for (const auto& c : comp) distill += c.config.train.loss.distill;
    EXPECT_EQ(distill, 5);

    const auto dir = experiment_grid("direction", base);
    ASSERT_EQ(dir.size(), 12u);
    std::set<std::pair<std::string, std::string>> cells;
    for (const auto& c : dir) cells.insert({c.row, c.column});
    EXPECT_EQ(cells.size(), 12u);
    EXPECT_TRUE(cells.count({"1->2", "asym"}));
    EXPECT_TRUE(cells.count({"bidirectional", "attention"}));

    EXPECT_THROW(experiment_grid("speed", base), ConfigError);
}

TEST(Experiment, ZeroEpochComponentsDependOnArchitectureOnly) {
    // Untrained, the distillation switch cannot matter: each architecture
    // scores the same in both columns.
    RunConfig base = tiny_run();
    base.train.epochs = 0;
    const ExperimentReport r = run_experiment("components", base, 2);
    ASSERT_EQ(r.cells.size(), 9u);
    for (int i = 0; i < 4; ++i) {
        EXPECT_EQ(r.cells[i].cell.row, r.cells[i + 4].cell.row);
        EXPECT_EQ(r.cells[i].miou_mean, r.cells[i + 4].miou_mean);
        EXPECT_EQ(r.cells[i].pixel_acc_mean, r.cells[i + 4].pixel_acc_mean);
    }
    for (const auto& c : r.cells) EXPECT_EQ(c.runs.size(), 2u);
}

TEST(Experiment, SharingParamsIndividualAddsOneEncoderCopy) {
    RunConfig base = tiny_run();
    base.train.epochs = 0;
    const ExperimentReport r = run_experiment("sharing", base, 1);
    const std::int64_t individual = r.cells[0].runs[0].result.params.total;
    const std::int64_t shared = r.cells[1].runs[0].result.params.total;
    const std::int64_t privat = r.cells[2].runs[0].result.params.total;

    // Oracle: encoder conv arrays of a one-branch net, enumerated by name.
    NetConfig one = base.net;
    one.modalities = 1;
    AsymFusionNet net(one, 1);
    std::int64_t encoder_conv = 0, encoder_norm = 0;
    for (Parameter* p : net.parameters()) {
        if (p->name.rfind("enc.", 0) != 0) continue;
        const bool conv = p->kind == ParamKind::kConvWeight || p->kind == ParamKind::kConvBias;
        (conv ? encoder_conv : encoder_norm) += static_cast<std::int64_t>(p->value.size());
    }
    EXPECT_EQ(individual - privat, encoder_conv);
    EXPECT_EQ(privat - shared, encoder_norm);

    // Where encoder convs dominate, individual weights roughly double the model.
    NetConfig big = resnet101_shape(2);
    const double priv_total = static_cast<double>(count_params(big).total);
    big.sharing = Sharing::kIndividual;
    const double ratio = static_cast<double>(count_params(big).total) / priv_total;
    EXPECT_GT(ratio, 1.8);
    EXPECT_LE(ratio, 2.0);
}

TEST(Experiment, OneWayRunsLeaveDonorUntouched) {
    const ExperimentReport r = run_experiment("direction", tiny_run(), 1);
    int checked = 0;
    for (const CellResult& c : r.cells) {
        for (const SeedRun& s : c.runs) {
            if (c.cell.row == "bidirectional") {
                EXPECT_FALSE(s.donor_checksum.has_value());
                continue;
            }
            ASSERT_TRUE(s.donor_checksum.has_value()) << c.cell.row << " " << c.cell.column;
            EXPECT_EQ(*s.donor_checksum, *s.donor_checksum_unfused) << c.cell.row << " " << c.cell.column;
            ++checked;
        }
    }
    EXPECT_EQ(checked, 8);
}

TEST(Experiment, ReportIsSelfDescribingAndDeterministic) {
    RunConfig base = tiny_run();
    const ExperimentReport a = run_experiment("sharing", base, 2);
    const ExperimentReport b = run_experiment("sharing", base, 2);
    json ja = report_to_json(a), jb = report_to_json(b);
    EXPECT_TRUE(ja.contains("timing"));
    ja.erase("timing");
    jb.erase("timing");
    EXPECT_EQ(ja.dump(), jb.dump());
    for (const json& cell : ja["cells"]) {
        const RunConfig embedded = run_config_from_json(cell["config"]);
        EXPECT_EQ(to_string(embedded.net.sharing), cell["row"].get<std::string>());
        ASSERT_EQ(cell["runs"].size(), 2u);
        EXPECT_EQ(cell["runs"][0]["seed"], base.seed);
        EXPECT_EQ(cell["runs"][1]["seed"], base.seed + 1);
    }

    const fs::path dir = fresh_dir("report");
    write_report(a, dir);
    EXPECT_TRUE(fs::exists(dir / "report.json"));
    std::ifstream csv(dir / "summary.csv");
    std::string line;
    int lines = 0;
    std::getline(csv, line);
    EXPECT_EQ(line.rfind("row,column,seeds,", 0), 0u);
    while (std::getline(csv, line)) ++lines;
    EXPECT_EQ(lines, 3);
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(cli({}).code, kExitUsage);
    EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(cli({"train", "--frobnicate", "1"}).code, kExitUsage);
    EXPECT_EQ(cli({"train", "stray"}).code, kExitUsage);
    EXPECT_EQ(cli({"verify-symmetry"}).code, kExitUsage);
    EXPECT_EQ(cli({"verify-symmetry", "--block", "sum"}).code, kExitUsage);
    EXPECT_EQ(cli({"experiment", "speed"}).code, kExitUsage);
    const CliRun r = cli({"count-params", "--preset", "resnet50"});
    EXPECT_EQ(r.code, kExitUsage);
    const json rec = json::parse(r.err.substr(r.err.rfind('{', r.err.rfind("\"error\""))));
    EXPECT_EQ(rec["exit_code"], kExitUsage);
    EXPECT_EQ(rec["error"]["kind"], "usage");
}

TEST(Cli, ConfigErrorsExitThree) {
    const CliRun r = cli({"train", "--net.fusion", "sum"});
    EXPECT_EQ(r.code, kExitConfig);
    const json rec = json::parse(r.err);
    EXPECT_EQ(rec["error"]["kind"], "config");
    EXPECT_EQ(cli({"train", "--set", "train.nope=1"}).code, kExitConfig);
    EXPECT_EQ(cli({"count-params", "--net.modalities", "0"}).code, kExitConfig);

    const fs::path dir = fresh_dir("badjson");
    std::ofstream(dir / "c.json") << "{ not json";
    EXPECT_EQ(cli({"train", "--config", (dir / "c.json").string()}).code, kExitConfig);
}

TEST(Cli, HelpExitsZero) {
    const CliRun r = cli({"--help"});
    EXPECT_EQ(r.code, kExitOk);
    EXPECT_NE(r.out.find("count-params"), std::string::npos);
}

TEST(Cli, CountParamsResNetPreset) {
    const CliRun r = cli({"count-params", "--preset", "resnet101-shape", "--modalities", "2"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j["extra_parameters"], 105344);
    EXPECT_NEAR(j["overhead_fraction"].get<double>(), 0.00089, 5e-6);
}

TEST(Cli, VerifySymmetryAverage) {
    const CliRun r = cli({"verify-symmetry", "--block", "average"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j["verdict"], "symmetric-constructive");
    EXPECT_LT(j["residual"].get<double>(), 1e-9);
    const json w = json::parse(cli({"verify-symmetry", "--block", "shift_fuse"}).out);
    EXPECT_EQ(w["verdict"], "asymmetric-witness");
}

TEST(Cli, GradcheckPasses) {
    const CliRun r = cli({"gradcheck"});
    EXPECT_EQ(r.code, kExitOk) << r.out;
    EXPECT_NE(r.out.find("tiny_network"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

std::vector<std::string> tiny_flags(const fs::path& out) {
    return {"--out", out.string(), "--net.stem_width", "4", "--net.stages",
            R"([{"blocks":1,"width":8,"mid":4},{"blocks":1,"width":8,"mid":4}])", "--net.decoder_width", "4",
            "--data.height", "8", "--data.width", "8", "--data.regions", "4", "--data.train_size", "8",
            "--data.test_size", "4", "--train.epochs", "1", "--train.batch_size", "4"};
}

TEST(Cli, GenDataWritesFilesAndCeiling) {
    const fs::path dir = fresh_dir("gendata");
    auto args = tiny_flags(dir);
    args.insert(args.begin(), "gen-data");
    const CliRun r = cli(args);
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(load_dataset(dir / "train.afsd").samples.size(), 8u);
    EXPECT_EQ(load_dataset(dir / "test.afsd").samples.size(), 4u);
    const json j = read_json(dir / "dataset.json");
    EXPECT_GE(j["bayes_ceiling"]["fused"].get<double>(), j["bayes_ceiling"]["unimodal"][0].get<double>());
}

TEST(Cli, TrainThenEvalRoundTrip) {
    const fs::path dir = fresh_dir("train");
    auto args = tiny_flags(dir);
    args.insert(args.begin(), {"train", "--quiet"});
    const CliRun r = cli(args);
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_TRUE(fs::exists(dir / kCheckpointPayload));
    const json trained = read_json(dir / "metrics.json");
    EXPECT_FALSE(trained.contains("timing"));

    // Same config again: metrics.json is byte-identical.
    std::ifstream first(dir / "metrics.json");
    const std::string before((std::istreambuf_iterator<char>(first)), std::istreambuf_iterator<char>());
    ASSERT_EQ(cli(args).code, kExitOk);
    std::ifstream second(dir / "metrics.json");
    const std::string after((std::istreambuf_iterator<char>(second)), std::istreambuf_iterator<char>());
    EXPECT_EQ(before, after);

    const CliRun e = cli({"eval", "--checkpoint", dir.string()});
    ASSERT_EQ(e.code, kExitOk) << e.err;
    EXPECT_EQ(json::parse(e.out)["metrics"].dump(), trained["metrics"].dump());

    fs::resize_file(dir / kCheckpointPayload, 100);
    const CliRun bad = cli({"eval", "--checkpoint", dir.string()});
    EXPECT_EQ(bad.code, kExitRuntime);
    EXPECT_EQ(json::parse(bad.err)["error"]["kind"], "checkpoint");
}

TEST(Cli, OutputDirFromEnvironment) {
    const fs::path dir = fresh_dir("envout");
    auto args = tiny_flags(dir);
    args.erase(args.begin(), args.begin() + 2);  // drop --out
    args.insert(args.begin(), "gen-data");
    ::setenv("ASYMFUSION_OUT", dir.string().c_str(), 1);
    const CliRun r = cli(args);
    ::unsetenv("ASYMFUSION_OUT");
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_TRUE(fs::exists(dir / "train.afsd"));
}

}  // namespace
}  // namespace asymfusion
