#include "asymfusion/harness.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "asymfusion/ops.hpp"
#include "asymfusion/rng.hpp"

namespace asymfusion {

using nlohmann::json;

namespace {

json stages_to_json(const std::vector<StageSpec>& stages) {
    json a = json::array();
    for (const StageSpec& s : stages) a.push_back({{"blocks", s.blocks}, {"width", s.width}, {"mid", s.mid}});
    return a;
}

// Reads keys out of an object, rejecting anything it did not consume.
class Reader {
  public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }
    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + where_ + it.key() + "'");
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("bad value for '" + where_ + key + "': " + e.what());
        }
    }
    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }
    const std::string& where() const { return where_; }

  private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace

json to_json(const RunConfig& c) {
    const NetConfig& n = c.net;
    const SynthConfig& d = c.data;
    const TrainConfig& t = c.train;
    return {
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"inputs", c.inputs},
        {"net",
         {{"modalities", n.modalities},
          {"in_channels", n.in_channels},
          {"classes", n.classes},
          {"stem_width", n.stem_width},
          {"stages", stages_to_json(n.stages)},
          {"decoder_width", n.decoder_width},
          {"sharing", to_string(n.sharing)},
          {"fusion", to_string(n.fusion)},
          {"shuffle", n.shuffle},
          {"shift", n.shift},
          {"cross_skip_only", n.cross_skip_only},
          {"split_fraction", n.split_fraction},
          {"direction", to_string(n.direction)},
          {"attention_hidden", n.attention_hidden},
          {"ensemble", n.ensemble},
          {"norm_eps", n.norm.eps},
          {"norm_momentum", n.norm.momentum}}},
        {"data",
         {{"height", d.height},
          {"width", d.width},
          {"classes", d.classes},
          {"modalities", d.modalities},
          {"regions", d.regions},
          {"noise_sigma", d.noise_sigma},
          {"visibility", d.visibility},
          {"offsets", d.offsets},
          {"train_size", d.train_size},
          {"test_size", d.test_size},
          {"seed", d.seed}}},
        {"train",
         {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr", t.optimizer.lr},
          {"momentum", t.optimizer.momentum},
          {"weight_decay", t.optimizer.weight_decay},
          {"poly_power", t.optimizer.poly_power},
          {"distill", t.loss.distill},
          {"distill_weight", t.loss.distill_weight}}},
    };
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    {
        Reader r(j, "");
        r.get("seed", c.seed);
        r.get("output_dir", c.output_dir);
        r.get("inputs", c.inputs);
        if (const json* nj = r.child("net")) {
            Reader n(*nj, "net.");
            NetConfig& net = c.net;
            n.get("modalities", net.modalities);
            n.get("in_channels", net.in_channels);
            n.get("classes", net.classes);
            n.get("stem_width", net.stem_width);
            if (const json* st = n.child("stages")) {
                if (!st->is_array()) throw ConfigError("net.stages must be an array");
                net.stages.clear();
                for (const json& e : *st) {
                    Reader sr(e, "net.stages[].");
                    StageSpec s;
                    sr.get("blocks", s.blocks);
                    sr.get("width", s.width);
                    sr.get("mid", s.mid);
                    net.stages.push_back(s);
                }
            }
            n.get("decoder_width", net.decoder_width);
            std::string sharing = to_string(net.sharing);
            std::string fusion = to_string(net.fusion);
            std::string direction = to_string(net.direction);
            n.get("sharing", sharing);
            n.get("fusion", fusion);
            n.get("direction", direction);
            net.sharing = parse_sharing(sharing);
            net.fusion = parse_fusion_method(fusion);
            net.direction = parse_direction(direction);
            n.get("shuffle", net.shuffle);
            n.get("shift", net.shift);
            n.get("cross_skip_only", net.cross_skip_only);
            n.get("split_fraction", net.split_fraction);
            n.get("attention_hidden", net.attention_hidden);
            n.get("ensemble", net.ensemble);
            n.get("norm_eps", net.norm.eps);
            n.get("norm_momentum", net.norm.momentum);
        }
        if (const json* dj = r.child("data")) {
            Reader d(*dj, "data.");
            SynthConfig& s = c.data;
            d.get("height", s.height);
            d.get("width", s.width);
            d.get("classes", s.classes);
            d.get("modalities", s.modalities);
            d.get("regions", s.regions);
            d.get("noise_sigma", s.noise_sigma);
            d.get("visibility", s.visibility);
            d.get("offsets", s.offsets);
            d.get("train_size", s.train_size);
            d.get("test_size", s.test_size);
            d.get("seed", s.seed);
        }
        if (const json* tj = r.child("train")) {
            Reader t(*tj, "train.");
            TrainConfig& tc = c.train;
            t.get("epochs", tc.epochs);
            t.get("batch_size", tc.batch_size);
            t.get("lr", tc.optimizer.lr);
            t.get("momentum", tc.optimizer.momentum);
            t.get("weight_decay", tc.optimizer.weight_decay);
            t.get("poly_power", tc.optimizer.poly_power);
            t.get("distill", tc.loss.distill);
            t.get("distill_weight", tc.loss.distill_weight);
        }
    }
    c.validate();
    return c;
}

void RunConfig::validate() const {
    net.validate();
    try {
        data.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("data: ") + e.what());
    }
    const std::vector<int> used = resolved_inputs();
    if (static_cast<int>(used.size()) != net.modalities) {
        throw ConfigError("net.modalities is " + std::to_string(net.modalities) + " but " +
                          std::to_string(used.size()) + " data modalities are fed");
    }
    for (int m : used) {
        if (m < 0 || m >= data.modalities) throw ConfigError("inputs names data modality " + std::to_string(m));
    }
    if (net.in_channels != 1) throw ConfigError("synthetic modalities have one channel; net.in_channels must be 1");
    if (net.classes != data.classes) throw ConfigError("net.classes must equal data.classes");
    if (data.height % net.spatial_multiple() != 0 || data.width % net.spatial_multiple() != 0) {
        throw ConfigError("image size must be a multiple of " + std::to_string(net.spatial_multiple()));
    }
    if (train.epochs < 0) throw ConfigError("train.epochs must be >= 0");
    if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(train.optimizer.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
    if (!(train.loss.distill_weight >= 0.0)) throw ConfigError("train.distill_weight must be >= 0");
}

std::vector<int> RunConfig::resolved_inputs() const {
    if (!inputs.empty()) return inputs;
    std::vector<int> all(data.modalities);
    for (int i = 0; i < data.modalities; ++i) all[i] = i;
    return all;
}

void apply_override(json& j, const std::string& dotted_key, const std::string& value) {
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted_key.find('.', start);
        const std::string key = dotted_key.substr(start, dot - start);
        if (key.empty()) throw ConfigError("bad override key '" + dotted_key + "'");
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, false);
            (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
            return;
        }
        if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
        node = &(*node)[key];
        start = dot + 1;
    }
}

std::filesystem::path resolve_output_dir(const std::string& explicit_dir) {
    if (!explicit_dir.empty()) return explicit_dir;
    if (const char* env = std::getenv("ASYMFUSION_OUT"); env != nullptr && *env != '\0') return env;
    return "out";
}

std::vector<Tensor> select_inputs(const std::vector<Tensor>& all, const std::vector<int>& which) {
    std::vector<Tensor> out;
    out.reserve(which.size());
    for (int m : which) out.push_back(all.at(m));
    return out;
}

MetricsReport evaluate_model(AsymFusionNet& net, const Dataset& data, const std::vector<int>& inputs,
                             int batch_size) {
    std::vector<LabelMap> preds, refs;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.samples.size(); start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(data.samples.size(), start + batch_size); ++i) idx.push_back(i);
        auto [all, labels] = stack(data, idx);
        const std::vector<Tensor> x = select_inputs(all, inputs);
        preds.push_back(ops::argmax_channels(net.predict(x)));
        refs.push_back(std::move(labels));
    }
    return evaluate(preds, refs, data.classes);
}

TrainResult train_and_evaluate(const RunConfig& cfg, const SynthData& data, AsymFusionNet& net,
                               SgdOptimizer& opt, const std::function<void(int, double)>& on_epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> inputs = cfg.resolved_inputs();
    const std::size_t n = data.train.samples.size();
    const int bs = cfg.train.batch_size;
    const std::int64_t per_epoch = static_cast<std::int64_t>((n + bs - 1) / bs);
    const std::int64_t total = per_epoch * cfg.train.epochs;

    TrainResult result;
    std::vector<std::size_t> order(n);
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Lcg64 rng(splitmix64(cfg.seed) ^ static_cast<std::uint64_t>(epoch + 1));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);
        double loss_sum = 0.0;
        std::int64_t steps = 0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::span<const std::size_t> idx(order.data() + start, std::min<std::size_t>(bs, n - start));
            auto [all, labels] = stack(data.train, idx);
            const Batch batch{select_inputs(all, inputs), std::move(labels)};
            const double lr = opt.lr_at(opt.iteration(), total);
            loss_sum += train_step(net, opt, batch, cfg.train.loss, lr).total;
            ++steps;
        }
        result.epoch_loss.push_back(steps == 0 ? 0.0 : loss_sum / steps);
        if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
    }
    result.metrics = evaluate_model(net, data.test, inputs, std::max(bs, 16));
    result.params = count_params(net);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::uint64_t branch_checksum(const ActivationTrace& trace, int branch, const std::string& prefix) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < trace.sites.size(); ++i) {
        if (trace.sites[i].rfind(prefix, 0) != 0) continue;
        for (double v : trace.values[i].at(branch).data()) {
            unsigned char b[sizeof(double)];
            std::memcpy(b, &v, sizeof v);
            for (unsigned char c : b) {
                h ^= c;
                h *= 0x100000001b3ull;
            }
        }
    }
    return h;
}

json metrics_to_json(const MetricsReport& m) {
    auto opt = [](const std::vector<std::optional<double>>& v) {
        json a = json::array();
        for (const auto& x : v) a.push_back(x ? json(*x) : json(nullptr));
        return a;
    };
    return {{"pixel_accuracy", m.pixel_accuracy}, {"mean_accuracy", m.mean_accuracy},
            {"mean_iou", m.mean_iou},             {"class_accuracy", opt(m.class_accuracy)},
            {"class_iou", opt(m.class_iou)},      {"confusion", m.confusion},
            {"pixels", m.pixels}};
}

json params_to_json(const ParamReport& p) {
    return {{"conv", p.conv},
            {"fusion", p.fusion},
            {"encoder_norm_per_set", p.encoder_norm_per_set},
            {"encoder_norm_sets", p.encoder_norm_sets},
            {"decoder_norm", p.decoder_norm},
            {"ensemble", p.ensemble},
            {"total", p.total},
            {"buffers", p.buffers},
            {"unimodal_total", p.unimodal_total},
            {"overhead", p.overhead}};
}

// ---------------------------------------------------------------- checkpoints

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

struct Entry {
    std::string group;  // param, buffer or velocity
    std::string name;
    Tensor* tensor;
};

std::vector<Entry> checkpoint_entries(AsymFusionNet& net, std::map<std::string, Tensor>& velocity) {
    std::vector<Entry> out;
    for (Parameter* p : net.parameters()) out.push_back({"param", p->name, &p->value});
    for (auto& [name, t] : net.buffers()) out.push_back({"buffer", name, t});
    for (auto& [name, t] : velocity) out.push_back({"velocity", name, &t});
    return out;
}

json shape_json(const Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const RunConfig& cfg, AsymFusionNet& net,
                     const SgdOptimizer& opt) {
    std::filesystem::create_directories(dir);
    std::map<std::string, Tensor> velocity = opt.velocity();
    const std::vector<Entry> entries = checkpoint_entries(net, velocity);

    std::ofstream bin(dir / kCheckpointPayload, std::ios::binary | std::ios::trunc);
    if (!bin) throw CheckpointError("cannot write " + (dir / kCheckpointPayload).string());
    json tensors = json::array();
    std::uint64_t offset = 0;
    for (const Entry& e : entries) {
        const std::uint64_t bytes = e.tensor->size() * sizeof(double);
        bin.write(reinterpret_cast<const char*>(e.tensor->data().data()), static_cast<std::streamsize>(bytes));
        tensors.push_back({{"group", e.group},
                           {"name", e.name},
                           {"shape", shape_json(e.tensor->shape())},
                           {"dtype", "f64"},
                           {"offset", offset},
                           {"bytes", bytes}});
        offset += bytes;
    }
    if (!bin.flush()) throw CheckpointError("write failed for " + (dir / kCheckpointPayload).string());

    const json manifest = {{"format", "asymfusion-checkpoint"},
                           {"version", kCheckpointVersion},
                           {"config", to_json(cfg)},
                           {"iteration", opt.iteration()},
                           {"payload_bytes", offset},
                           {"tensors", tensors}};
    std::ofstream mf(dir / kCheckpointManifest, std::ios::trunc);
    mf << manifest.dump(2) << '\n';
    if (!mf) throw CheckpointError("write failed for " + (dir / kCheckpointManifest).string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
    json manifest;
    {
        std::ifstream mf(dir / kCheckpointManifest);
        if (!mf) throw CheckpointError("cannot open " + (dir / kCheckpointManifest).string());
        manifest = json::parse(mf, nullptr, false);
        if (manifest.is_discarded() || !manifest.is_object()) throw CheckpointError("manifest is not valid JSON");
    }
    if (manifest.value("format", "") != "asymfusion-checkpoint") throw CheckpointError("not a checkpoint manifest");
    if (manifest.value("version", -1) != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + manifest.value("version", json(-1)).dump());
    }

    LoadedCheckpoint out;
    out.config = run_config_from_json(manifest.at("config"));
    out.net = std::make_unique<AsymFusionNet>(out.config.net, out.config.seed);
    out.optimizer = SgdOptimizer(out.config.train.optimizer);
    out.optimizer.set_iteration(manifest.at("iteration").get<std::int64_t>());

    std::ifstream bin(dir / kCheckpointPayload, std::ios::binary);
    if (!bin) throw CheckpointError("cannot open " + (dir / kCheckpointPayload).string());
    const std::uint64_t file_bytes = std::filesystem::file_size(dir / kCheckpointPayload);

    std::map<std::string, Tensor*> params, buffers;
    for (Parameter* p : out.net->parameters()) params[p->name] = &p->value;
    for (auto& [name, t] : out.net->buffers()) buffers[name] = t;
    std::set<std::string> loaded;

    std::uint64_t expected = 0;
    for (const json& e : manifest.at("tensors")) {
        const std::string group = e.at("group").get<std::string>();
        const std::string name = e.at("name").get<std::string>();
        const std::vector<int> dims = e.at("shape").get<std::vector<int>>();
        const auto offset = e.at("offset").get<std::uint64_t>();
        const auto bytes = e.at("bytes").get<std::uint64_t>();
        if (dims.size() != 4 || e.value("dtype", "") != "f64") throw CheckpointError("tensor " + name + ": bad shape or dtype");
        const Shape shape{dims[0], dims[1], dims[2], dims[3]};
        if (offset != expected || bytes != shape.numel() * sizeof(double)) {
            throw CheckpointError("tensor " + name + ": offset/size does not match its shape");
        }
        if (offset + bytes > file_bytes) {
            throw CheckpointError("tensor " + name + ": payload truncated (" + std::to_string(file_bytes) +
                                  " bytes, need " + std::to_string(offset + bytes) + ")");
        }
        expected += bytes;

        Tensor* target = nullptr;
        if (group == "param" || group == "buffer") {
            auto& table = group == "param" ? params : buffers;
            auto it = table.find(name);
            if (it == table.end()) throw CheckpointError("tensor " + name + ": not part of the configured network");
            target = it->second;
            if (!(target->shape() == shape)) {
                throw CheckpointError("tensor " + name + ": shape " + shape.str() + " but network expects " +
                                      target->shape().str());
            }
            loaded.insert(group + ":" + name);
        } else if (group == "velocity") {
            if (!params.count(name)) throw CheckpointError("tensor " + name + ": momentum for unknown parameter");
            target = &out.optimizer.velocity().try_emplace(name, shape).first->second;
        } else {
            throw CheckpointError("tensor " + name + ": unknown group '" + group + "'");
        }
        bin.seekg(static_cast<std::streamoff>(offset));
        bin.read(reinterpret_cast<char*>(target->data().data()), static_cast<std::streamsize>(bytes));
        if (!bin) throw CheckpointError("tensor " + name + ": read failed");
    }
    if (expected != manifest.at("payload_bytes").get<std::uint64_t>() || expected != file_bytes) {
        throw CheckpointError("payload is " + std::to_string(file_bytes) + " bytes, manifest describes " +
                              std::to_string(expected));
    }
    for (const auto& [name, t] : params) {
        if (!loaded.count("param:" + name)) throw CheckpointError("tensor " + name + ": missing from checkpoint");
    }
    for (const auto& [name, t] : buffers) {
        if (!loaded.count("buffer:" + name)) throw CheckpointError("tensor " + name + ": missing from checkpoint");
    }
    return out;
}

// ---------------------------------------------------------------- experiments

std::vector<ExperimentCell> experiment_grid(const std::string& name, const RunConfig& base) {
    std::vector<ExperimentCell> cells;
    auto add = [&](std::string row, std::string col, auto&& edit) {
        RunConfig c = base;
        edit(c);
        c.validate();
        cells.push_back({std::move(row), std::move(col), std::move(c)});
    };
    if (name == "sharing") {
        for (Sharing s : {Sharing::kIndividual, Sharing::kSharedNorms, Sharing::kPrivateNorms}) {
            add(to_string(s), "asym", [&](RunConfig& c) { c.net.sharing = s; });
        }
    } else if (name == "components") {
        struct Row {
            const char* name;
            bool shuffle, shift, cross_skip;
        };
        const Row rows[] = {{"none", false, false, false},
                            {"shuffle", true, false, false},
                            {"shift", false, true, false},
                            {"shuffle+shift", true, true, false}};
        for (bool distill : {false, true}) {
            for (const Row& r : rows) {
                add(r.name, distill ? "distill" : "no-distill", [&](RunConfig& c) {
                    c.net.fusion = FusionMethod::kAsym;
                    c.net.shuffle = r.shuffle;
                    c.net.shift = r.shift;
                    c.net.cross_skip_only = r.cross_skip;
                    c.train.loss.distill = distill;
                });
            }
        }
        add("cross-skip-only", "distill", [&](RunConfig& c) {
            c.net.fusion = FusionMethod::kAsym;
            c.net.shuffle = true;
            c.net.shift = true;
            c.net.cross_skip_only = true;
            c.train.loss.distill = true;
        });
    } else if (name == "direction") {
        for (Direction d : {Direction::kOneToTwo, Direction::kTwoToOne, Direction::kBidirectional}) {
            for (FusionMethod f :
                 {FusionMethod::kConcat, FusionMethod::kAverage, FusionMethod::kAttention, FusionMethod::kAsym}) {
                add(to_string(d), to_string(f), [&](RunConfig& c) {
                    c.net.direction = d;
                    c.net.fusion = f;
                });
            }
        }
    } else {
        throw ConfigError("unknown experiment '" + name + "' (expected sharing, components or direction)");
    }
    return cells;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

// Donor encoder checksums of a trained one-way net and of an unfused twin
// carrying the same weights, on the first test batch in eval mode.
std::pair<std::uint64_t, std::uint64_t> donor_checksums(const RunConfig& cfg, AsymFusionNet& net,
                                                        const Dataset& test) {
    const int donor = cfg.net.direction == Direction::kOneToTwo ? 0 : 1;
    NetConfig plain = cfg.net;
    plain.direction = Direction::kNone;
    AsymFusionNet twin(plain, cfg.seed);
    for (Parameter* p : twin.parameters()) {
        if (Parameter* src = net.find_parameter(p->name)) p->value = src->value;
    }
    std::map<std::string, Tensor*> src_buffers;
    for (auto& [name, t] : net.buffers()) src_buffers[name] = t;
    for (auto& [name, t] : twin.buffers()) {
        if (auto it = src_buffers.find(name); it != src_buffers.end()) *t = *it->second;
    }

    std::vector<std::size_t> idx(std::min<std::size_t>(8, test.samples.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto [all, labels] = stack(test, idx);
    const std::vector<Tensor> x = select_inputs(all, cfg.resolved_inputs());
    auto trace_of = [&](AsymFusionNet& n) {
        Graph g;
        ActivationTrace trace;
        n.forward(g, x, false, &trace);
        return branch_checksum(trace, donor);
    };
    return {trace_of(net), trace_of(twin)};
}

}  // namespace

CellResult run_cell(const ExperimentCell& cell, int seeds, const std::function<void(const std::string&)>& log) {
    if (seeds < 1) throw ConfigError("seeds must be >= 1");
    CellResult out;
    out.cell = cell;
    std::vector<double> miou, pacc, macc;
    for (int i = 0; i < seeds; ++i) {
        RunConfig cfg = cell.config;
        cfg.seed = cell.config.seed + static_cast<std::uint64_t>(i);
        cfg.data.seed = cfg.seed;
        const SynthData data = generate(cfg.data);
        AsymFusionNet net(cfg.net, cfg.seed);
        SgdOptimizer opt(cfg.train.optimizer);
        SeedRun run;
        run.seed = cfg.seed;
        run.result = train_and_evaluate(cfg, data, net, opt);
        const Direction d = cfg.net.direction;
        if (cfg.net.modalities == 2 && (d == Direction::kOneToTwo || d == Direction::kTwoToOne)) {
            auto [fused, plain] = donor_checksums(cfg, net, data.test);
            run.donor_checksum = fused;
            run.donor_checksum_unfused = plain;
        }
        if (log) {
            std::ostringstream os;
            os << cell.row << " / " << cell.column << " seed " << cfg.seed << ": mIoU "
               << run.result.metrics.mean_iou << " pixel acc " << run.result.metrics.pixel_accuracy << " ("
               << run.result.seconds << " s)";
            log(os.str());
        }
        miou.push_back(run.result.metrics.mean_iou);
        pacc.push_back(run.result.metrics.pixel_accuracy);
        macc.push_back(run.result.metrics.mean_accuracy);
        out.runs.push_back(std::move(run));
    }
    std::tie(out.miou_mean, out.miou_std) = mean_std(miou);
    std::tie(out.pixel_acc_mean, out.pixel_acc_std) = mean_std(pacc);
    std::tie(out.mean_acc_mean, out.mean_acc_std) = mean_std(macc);
    return out;
}

ExperimentReport run_experiment(const std::string& name, const RunConfig& base, int seeds,
                                const std::function<void(const std::string&)>& log) {
    if (seeds < 1) throw ConfigError("seeds must be >= 1");
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentReport r;
    r.name = name;
    for (const ExperimentCell& cell : experiment_grid(name, base)) r.cells.push_back(run_cell(cell, seeds, log));
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

json report_to_json(const ExperimentReport& r) {
    json cells = json::array();
    json timing = {{"total_seconds", r.seconds}, {"runs", json::array()}};
    for (const CellResult& c : r.cells) {
        json runs = json::array();
        for (const SeedRun& s : c.runs) {
            json run = {{"seed", s.seed},
                        {"metrics", metrics_to_json(s.result.metrics)},
                        {"epoch_loss", s.result.epoch_loss}};
            if (s.donor_checksum) {
                run["donor_checksum"] = *s.donor_checksum;
                run["donor_checksum_unfused"] = *s.donor_checksum_unfused;
                run["donor_unchanged"] = *s.donor_checksum == *s.donor_checksum_unfused;
            }
            runs.push_back(run);
            timing["runs"].push_back({{"row", c.cell.row}, {"column", c.cell.column}, {"seed", s.seed},
                                      {"seconds", s.result.seconds}});
        }
        cells.push_back({{"row", c.cell.row},
                         {"column", c.cell.column},
                         {"config", to_json(c.cell.config)},
                         {"params", c.runs.empty() ? json(nullptr) : params_to_json(c.runs.front().result.params)},
                         {"runs", runs},
                         {"mean_iou", {{"mean", c.miou_mean}, {"std", c.miou_std}}},
                         {"pixel_accuracy", {{"mean", c.pixel_acc_mean}, {"std", c.pixel_acc_std}}},
                         {"mean_accuracy", {{"mean", c.mean_acc_mean}, {"std", c.mean_acc_std}}}});
    }
    return {{"experiment", r.name}, {"cells", cells}, {"timing", timing}};
}

std::string report_to_csv(const ExperimentReport& r) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "row,column,seeds,params_total,params_extra,miou_mean,miou_std,pixel_acc_mean,pixel_acc_std,"
          "mean_acc_mean,mean_acc_std\n";
    for (const CellResult& c : r.cells) {
        const ParamReport p = c.runs.empty() ? ParamReport{} : c.runs.front().result.params;
        os << c.cell.row << ',' << c.cell.column << ',' << c.runs.size() << ',' << p.total << ','
           << (p.total - p.unimodal_total) << ',' << c.miou_mean << ',' << c.miou_std << ',' << c.pixel_acc_mean
           << ',' << c.pixel_acc_std << ',' << c.mean_acc_mean << ',' << c.mean_acc_std << '\n';
    }
    return os.str();
}

void write_report(const ExperimentReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "report.json") << report_to_json(r).dump(2) << '\n';
    std::ofstream(dir / "summary.csv") << report_to_csv(r);
}

}  // namespace asymfusion
