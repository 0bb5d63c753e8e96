#include "blocklab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "blocklab/linalg.hpp"
#include "blocklab/spectral.hpp"
#include "json.hpp"

namespace blocklab {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config (de)serialization -------------------------------------------

namespace {

const char* arch_name(VariantSpec::Arch a) {
    switch (a) {
        case VariantSpec::Arch::dense: return "dense";
        case VariantSpec::Arch::v1: return "v1";
        case VariantSpec::Arch::v2: return "v2";
        case VariantSpec::Arch::v3: return "v3";
        case VariantSpec::Arch::v4: return "v4";
    }
    return "dense";
}

VariantSpec::Arch arch_from(const std::string& s) {
    if (s == "dense") return VariantSpec::Arch::dense;
    if (s == "v1") return VariantSpec::Arch::v1;
    if (s == "v2") return VariantSpec::Arch::v2;
    if (s == "v3") return VariantSpec::Arch::v3;
    if (s == "v4") return VariantSpec::Arch::v4;
    throw std::invalid_argument("config: unknown arch '" + s + "' (dense|v1|v2|v3|v4)");
}

const char* task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::highrank_recovery: return "highrank_recovery";
        case TaskKind::extreme_modular: return "extreme_modular";
        case TaskKind::factorized_manifold: return "factorized_manifold";
        case TaskKind::joint_dist: return "joint_dist";
    }
    return "highrank_recovery";
}

TaskKind task_kind_from(const std::string& s) {
    if (s == "highrank_recovery") return TaskKind::highrank_recovery;
    if (s == "extreme_modular") return TaskKind::extreme_modular;
    if (s == "factorized_manifold") return TaskKind::factorized_manifold;
    if (s == "joint_dist") return TaskKind::joint_dist;
    throw std::invalid_argument("config: unknown task.kind '" + s + "'");
}

json task_to_json(const TaskSpec& t) {
    return json{{"kind", task_kind_name(t.kind)}, {"dim", t.dim},       {"groups", t.groups},
                {"noise_sigma", t.noise_sigma},   {"scramble", t.scramble},
                {"seed", t.seed},                 {"train_n", t.train_n}, {"val_n", t.val_n}};
}

TaskSpec task_from_json(const json& j) {
    TaskSpec t;
    t.kind = task_kind_from(j.at("kind").get<std::string>());
    t.dim = j.at("dim").get<std::size_t>();
    t.groups = j.value("groups", std::size_t{1});
    t.noise_sigma = j.value("noise_sigma", 0.01);
    t.scramble = j.value("scramble", false);
    t.seed = j.value("seed", std::uint64_t{0});
    t.train_n = j.value("train_n", std::size_t{10000});
    t.val_n = j.value("val_n", std::size_t{2048});
    return t;
}

json train_to_json(const TrainConfig& t) {
    return json{
        {"steps", t.steps},
        {"batch", t.batch},
        {"lr", t.lr},
        {"optimizer",
         {{"kind", t.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"},
          {"beta1", t.optimizer.beta1},
          {"beta2", t.optimizer.beta2},
          {"eps", t.optimizer.eps}}},
        {"loss",
         {{"kind", t.loss.kind == LossKind::mse
                       ? "mse"
                       : (t.loss.kind == LossKind::focal ? "focal" : "cross_entropy")},
          {"alpha", t.loss.alpha},
          {"gamma", t.loss.gamma}}},
        {"early_stop_patience", t.early_stop_patience},
        {"eval_every", t.eval_every},
        {"seed", t.seed}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig t;
    t.steps = j.value("steps", std::size_t{1000});
    t.batch = j.value("batch", std::size_t{128});
    t.lr = j.value("lr", 1e-3);
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        const std::string kind = o.value("kind", "adam");
        if (kind == "adam") {
            t.optimizer.kind = OptimizerKind::adam;
        } else if (kind == "sgd") {
            t.optimizer.kind = OptimizerKind::sgd;
        } else {
            throw std::invalid_argument("config: unknown optimizer.kind '" + kind + "'");
        }
        t.optimizer.beta1 = o.value("beta1", 0.9);
        t.optimizer.beta2 = o.value("beta2", 0.999);
        t.optimizer.eps = o.value("eps", 1e-8);
    }
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        const std::string kind = l.value("kind", "mse");
        if (kind == "mse") {
            t.loss.kind = LossKind::mse;
        } else if (kind == "focal") {
            t.loss.kind = LossKind::focal;
        } else if (kind == "cross_entropy") {
            t.loss.kind = LossKind::cross_entropy;
        } else {
            throw std::invalid_argument("config: unknown loss.kind '" + kind + "'");
        }
        t.loss.alpha = l.value("alpha", 1.0);
        t.loss.gamma = l.value("gamma", 0.0);
    }
    t.early_stop_patience = j.value("early_stop_patience", std::size_t{10});
    t.eval_every = j.value("eval_every", std::size_t{50});
    t.seed = j.value("seed", std::uint64_t{0});
    return t;
}

json variant_to_json(const VariantSpec& v) {
    json j{{"name", v.name},
           {"arch", arch_name(v.arch)},
           {"depth", v.depth},
           {"blocks", v.blocks},
           {"inner_width", v.inner_width},
           {"activation", v.activation == Activation::relu ? "relu" : "none"},
           {"residual", v.residual},
           {"layernorm", v.layernorm}};
    if (v.block_size) j["block_size"] = v.block_size;
    return j;
}

VariantSpec variant_from_json(const json& j) {
    VariantSpec v;
    v.name = j.at("name").get<std::string>();
    v.arch = arch_from(j.at("arch").get<std::string>());
    v.depth = j.value("depth", std::size_t{1});
    v.blocks = j.value("blocks", std::size_t{8});
    v.block_size = j.value("block_size", std::size_t{0});
    v.inner_width = j.value("inner_width", std::size_t{0});
    const std::string act = j.value("activation", "none");
    if (act == "none") {
        v.activation = Activation::none;
    } else if (act == "relu") {
        v.activation = Activation::relu;
    } else {
        throw std::invalid_argument("config: unknown activation '" + act + "'");
    }
    v.residual = j.value("residual", false);
    v.layernorm = j.value("layernorm", false);
    return v;
}

json config_to_json_impl(const ExperimentConfig& c, bool with_output_dir) {
    json variants = json::array();
    for (const auto& v : c.variants) variants.push_back(variant_to_json(v));
    json j{{"experiment", c.experiment},
           {"task", task_to_json(c.task)},
           {"train", train_to_json(c.train)},
           {"variants", std::move(variants)}};
    if (!c.dims.empty()) j["dims"] = c.dims;
    if (with_output_dir) j["output_dir"] = c.output_dir;
    if (!c.corpus_in.empty()) j["corpus_in"] = c.corpus_in;
    if (c.experiment == "corpus_report") {
        j["chunk_len"] = c.chunk_len;
        j["stride"] = c.stride;
    }
    if (c.experiment == "embedding_ablation") {
        j["embed"] = {{"pitches", c.embed_pitches},
                      {"hands", c.embed_hands},
                      {"dim", c.embed_dim},
                      {"stream_len", c.embed_stream_len}};
    }
    return j;
}

}  // namespace

void ExperimentConfig::validate() const {
    static const std::vector<std::string> kinds{"svd_paradox", "hierarchy_of_topology",
                                                "kill_shot", "embedding_ablation",
                                                "corpus_report"};
    if (std::find(kinds.begin(), kinds.end(), experiment) == kinds.end()) {
        throw std::invalid_argument("config: field 'experiment' must be one of svd_paradox, "
                                    "hierarchy_of_topology, kill_shot, embedding_ablation, "
                                    "corpus_report; got '" + experiment + "'");
    }
    if (experiment == "corpus_report") {
        if (corpus_in.empty()) {
            throw std::invalid_argument("config: corpus_report requires field 'corpus_in'");
        }
        return;
    }
    if (experiment == "embedding_ablation") {
        if (embed_pitches < 2 || embed_hands < 2) {
            throw std::invalid_argument("config: embed.pitches and embed.hands must be >= 2");
        }
        return;
    }
    task.validate();
    train.validate();
    if (variants.empty()) {
        throw std::invalid_argument("config: field 'variants' must not be empty");
    }
    for (const auto& v : variants) {
        const std::vector<std::size_t> check_dims = dims.empty()
                                                        ? std::vector<std::size_t>{task.dim}
                                                        : dims;
        for (std::size_t dim : check_dims) {
            const std::size_t width = v.inner_width ? v.inner_width : dim;
            const std::size_t blocks = v.blocks_at(width);
            if (v.arch != VariantSpec::Arch::dense &&
                (blocks == 0 || width % blocks != 0)) {
                throw std::invalid_argument("config: variant '" + v.name + "': width " +
                                            std::to_string(width) +
                                            " not divisible by blocks " +
                                            std::to_string(blocks));
            }
            if ((v.arch == VariantSpec::Arch::v3 || v.arch == VariantSpec::Arch::v4) &&
                v.inner_width != 0 && v.inner_width != dim) {
                throw std::invalid_argument("config: variant '" + v.name +
                                            "': NMI partitions (v3/v4) require inner_width == task dim");
            }
            if (task.kind != TaskKind::highrank_recovery && task.kind != TaskKind::joint_dist &&
                dim % task.groups != 0) {
                throw std::invalid_argument("config: dim " + std::to_string(dim) +
                                            " not divisible by task.groups " +
                                            std::to_string(task.groups));
            }
        }
    }
}

std::string ExperimentConfig::to_json() const {
    return config_to_json_impl(*this, true).dump(2);
}

ExperimentConfig ExperimentConfig::parse_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
    }
    ExperimentConfig c;
    c.experiment = j.at("experiment").get<std::string>();
    if (j.contains("task")) c.task = task_from_json(j.at("task"));
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    if (j.contains("dims")) c.dims = j.at("dims").get<std::vector<std::size_t>>();
    if (j.contains("variants")) {
        for (const auto& vj : j.at("variants")) c.variants.push_back(variant_from_json(vj));
    }
    c.output_dir = j.value("output_dir", std::string("out"));
    c.corpus_in = j.value("corpus_in", std::string());
    c.chunk_len = j.value("chunk_len", std::size_t{256});
    c.stride = j.value("stride", std::size_t{128});
    if (j.contains("embed")) {
        const auto& e = j.at("embed");
        c.embed_pitches = e.value("pitches", std::size_t{16});
        c.embed_hands = e.value("hands", std::size_t{4});
        c.embed_dim = e.value("dim", std::size_t{16});
        c.embed_stream_len = e.value("stream_len", std::size_t{10000});
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("config: cannot open " + path);
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_json(text);
}

std::string ExperimentConfig::hash() const {
    const std::string canon = config_to_json_impl(*this, false).dump();
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// --- variant network construction ---------------------------------------

NetworkSpec build_variant_network(const VariantSpec& variant, const TaskSpec& task,
                                  const TrainConfig& train,
                                  std::optional<BlockPartition>* recovered) {
    const std::size_t dim = task.dim;
    const std::size_t width = variant.inner_width ? variant.inner_width : dim;
    const std::size_t blocks = variant.blocks_at(width);

    std::optional<BlockPartition> partition;
    ShuffleSchedule schedule = ShuffleSchedule::none();
    switch (variant.arch) {
        case VariantSpec::Arch::dense:
            break;
        case VariantSpec::Arch::v1:
            partition = BlockPartition::contiguous(width, blocks);
            break;
        case VariantSpec::Arch::v2: {
            partition = BlockPartition::contiguous(width, blocks);
            SeededRng seed_rng(train.seed, 0x5EED);
            schedule = ShuffleSchedule::random(seed_rng.split(std::hash<std::string>{}(variant.name)).stream());
            break;
        }
        case VariantSpec::Arch::v3:
        case VariantSpec::Arch::v4: {
            const Matrix sample = sample_inputs(task, task.train_n);
            const NmiMatrix c = pairwise_nmi(sample, 16);
            BlockPartition ward = partition_nmi_ward(c, blocks);
            if (!ward.equal_sized()) ward = rebalance_equal(ward, c);
            partition = std::move(ward);
            if (variant.arch == VariantSpec::Arch::v4) schedule = ShuffleSchedule::cyclic();
            break;
        }
    }
    if (recovered) *recovered = partition;

    NetworkSpec spec;
    spec.input_dim = dim;
    const bool adapters = width != dim;
    if (adapters) {
        LayerSpec in;
        in.kind = LayerKind::dense;
        in.in_dim = dim;
        in.out_dim = width;
        spec.layers.push_back(in);
    }
    for (std::size_t l = 0; l < variant.depth; ++l) {
        LayerSpec layer;
        layer.in_dim = width;
        layer.out_dim = width;
        layer.activation = variant.activation;
        layer.residual = variant.residual;
        layer.layernorm = variant.layernorm;
        if (variant.arch == VariantSpec::Arch::dense) {
            layer.kind = LayerKind::dense;
        } else {
            layer.kind = LayerKind::block_diagonal;
            layer.partition = partition;
        }
        spec.layers.push_back(layer);
    }
    if (adapters) {
        LayerSpec out;
        out.kind = LayerKind::dense;
        out.in_dim = width;
        out.out_dim = dim;
        spec.layers.push_back(out);
    }
    apply_shuffle_schedule(spec, schedule);
    spec.validate();
    return spec;
}

// --- runner ---------------------------------------------------------------

namespace {

VariantResult run_variant(const VariantSpec& variant, const TaskSpec& task,
                          const TrainConfig& train_config) {
    VariantResult res;
    res.name = variant.name;
    res.dim = task.dim;
    const auto t0 = std::chrono::steady_clock::now();

    std::optional<BlockPartition> recovered;
    NetworkSpec spec = build_variant_network(variant, task, train_config, &recovered);
    if (variant.arch == VariantSpec::Arch::v3 || variant.arch == VariantSpec::Arch::v4) {
        res.partition = recovered;
    }
    res.param_count = param_count(spec);

    TaskData data = make_task(task);
    TrainResult tr = train(spec, data.source, train_config);
    res.history = std::move(tr.history);
    res.val_loss = res.history.best_val;
    res.failed = res.history.diverged;

    if (!res.failed) {
        // Rank diagnostics on the Jacobian into the widest layer, taken at a
        // seeded probe (exact for purely linear stacks).
        const std::size_t widest = spec.widest_layer();
        SeededRng probe_rng(task.seed, 0x9E0);
        std::vector<double> probe(spec.input_dim);
        for (double& v : probe) v = probe_rng.normal();
        const Matrix analysis = end_to_end_linear_map(tr.best_state, spec, &probe, widest);
        const auto sigma = svd_values(analysis);
        const SpectrumReport sp = analyze_spectrum(sigma, res.param_count, task.dim);
        res.effrank_entropy = sp.effrank_entropy;
        res.effrank_95 = sp.effrank_95;
        res.nuclear_norm = sp.nuclear_norm;
        res.eta = sp.utilization_eta;
        res.analyzed_matrix = "jacobian(input->layer_" + std::to_string(widest) + ", width " +
                              std::to_string(analysis.rows()) + ") at seeded probe";
    } else {
        res.analyzed_matrix = "skipped (diverged)";
    }

    res.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

const VariantResult* find_variant(const std::vector<VariantResult>& rs, const std::string& name,
                                  std::size_t dim) {
    for (const auto& r : rs) {
        if (r.name == name && r.dim == dim) return &r;
    }
    return nullptr;
}

const VariantResult* find_arch(const std::vector<VariantResult>& rs,
                               const std::vector<VariantSpec>& vs, VariantSpec::Arch arch,
                               std::size_t dim, bool wide_only = false) {
    for (const auto& v : vs) {
        if (v.arch != arch) continue;
        if (wide_only && v.inner_width == 0) continue;
        if (const auto* r = find_variant(rs, v.name, dim)) return r;
    }
    return nullptr;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

std::vector<OrderingCheck> evaluate_orderings(const ExperimentConfig& c,
                                              const std::vector<VariantResult>& rs) {
    std::vector<OrderingCheck> checks;
    const auto dims = c.dims.empty() ? std::vector<std::size_t>{c.task.dim} : c.dims;

    if (c.experiment == "svd_paradox") {
        const std::size_t dim = dims[0];
        const auto* dense = find_arch(rs, c.variants, VariantSpec::Arch::dense, dim);
        const auto* wide = find_arch(rs, c.variants, VariantSpec::Arch::v2, dim, true);
        if (dense && wide) {
            checks.push_back({"wide_loss_below_dense", wide->val_loss < dense->val_loss,
                              fmt(wide->val_loss) + " < " + fmt(dense->val_loss)});
            checks.push_back({"wide_effrank_above_dense",
                              wide->effrank_entropy > dense->effrank_entropy,
                              fmt(wide->effrank_entropy) + " > " + fmt(dense->effrank_entropy)});
        }
    } else if (c.experiment == "hierarchy_of_topology") {
        const std::size_t dim = dims[0];
        const auto* dense = find_arch(rs, c.variants, VariantSpec::Arch::dense, dim);
        const auto* v2 = find_arch(rs, c.variants, VariantSpec::Arch::v2, dim);
        const auto* v3 = find_arch(rs, c.variants, VariantSpec::Arch::v3, dim);
        if (dense && v2 && v3) {
            checks.push_back({"v3_at_most_third_of_v2", v3->val_loss <= v2->val_loss / 3.0,
                              fmt(v3->val_loss) + " <= " + fmt(v2->val_loss) + "/3"});
            checks.push_back({"v3_within_3x_of_dense", v3->val_loss <= 3.0 * dense->val_loss,
                              fmt(v3->val_loss) + " <= 3*" + fmt(dense->val_loss)});
        }
    } else if (c.experiment == "kill_shot") {
        const std::size_t dmin = *std::min_element(dims.begin(), dims.end());
        const std::size_t dmax = *std::max_element(dims.begin(), dims.end());
        const auto block_of = [&](std::size_t dim) -> const VariantResult* {
            for (auto arch : {VariantSpec::Arch::v4, VariantSpec::Arch::v3, VariantSpec::Arch::v2,
                              VariantSpec::Arch::v1}) {
                if (const auto* r = find_arch(rs, c.variants, arch, dim)) return r;
            }
            return nullptr;
        };
        const auto* dense_max = find_arch(rs, c.variants, VariantSpec::Arch::dense, dmax);
        const auto* block_max = block_of(dmax);
        if (dense_max && block_max) {
            checks.push_back({"dense_collapse_at_" + std::to_string(dmax),
                              dense_max->val_loss >= 2.0 * block_max->val_loss,
                              fmt(dense_max->val_loss) + " >= 2*" + fmt(block_max->val_loss)});
        }
        const auto* dense_min = find_arch(rs, c.variants, VariantSpec::Arch::dense, dmin);
        const auto* block_min = block_of(dmin);
        if (dense_min && block_min) {
            const double hi = std::max(dense_min->val_loss, block_min->val_loss);
            const double lo = std::min(dense_min->val_loss, block_min->val_loss);
            checks.push_back({"parity_at_" + std::to_string(dmin), hi <= 2.0 * lo,
                              fmt(hi) + " <= 2*" + fmt(lo)});
        }
        for (std::size_t dim : dims) {
            if (dim < 512) continue;
            const auto* dense = find_arch(rs, c.variants, VariantSpec::Arch::dense, dim);
            const auto* block = block_of(dim);
            if (dense && block) {
                checks.push_back({"block_effrank_at_" + std::to_string(dim),
                                  block->effrank_entropy >= dense->effrank_entropy,
                                  fmt(block->effrank_entropy) + " >= " +
                                      fmt(dense->effrank_entropy)});
            }
        }
    }
    return checks;
}

}  // namespace

// --- embedding ablation ----------------------------------------------------

EmbeddingAblationResult run_embedding_ablation(const ExperimentConfig& config) {
    const std::size_t P = config.embed_pitches, H = config.embed_hands, d = config.embed_dim;
    const std::size_t vocab = P * H;
    const std::uint64_t seed = config.train.seed;
    const std::size_t p_star = P / 2, h_star = H / 2;
    const std::size_t excluded = p_star * H + h_star;

    // Seeded nonuniform factor marginals for the token stream.
    SeededRng marg_rng(seed, 0xAB01);
    const auto make_marginal = [&marg_rng](std::size_t card) {
        std::vector<double> p(card);
        double total = 0.0;
        for (double& v : p) {
            v = marg_rng.uniform(0.25, 1.0);
            total += v;
        }
        for (double& v : p) v /= total;
        return p;
    };
    const std::vector<double> pp = make_marginal(P);
    const std::vector<double> ph = make_marginal(H);

    // Fixed regression targets, one row per token.
    SeededRng target_rng(seed, 0xAB02);
    auto targets = std::make_shared<Matrix>(Matrix::gaussian(vocab, d, target_rng));

    const auto draw_cat = [](SeededRng& r, const std::vector<double>& p) {
        const double u = r.uniform01();
        double cum = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            cum += p[i];
            if (u < cum) return i;
        }
        return p.size() - 1;
    };
    const auto draw_token = [&, excluded](SeededRng& r) {
        while (true) {
            const std::size_t p = draw_cat(r, pp);
            const std::size_t h = draw_cat(r, ph);
            const std::size_t t = p * H + h;
            if (t != excluded) return t;
        }
    };

    TaskSource task;
    task.input_dim = d;
    task.output_dim = d;
    task.val_batches = 2;
    task.next = [targets, draw_token, seed, d](Split split, std::uint64_t index,
                                               std::size_t batch) {
        SeededRng rng(seed, (split == Split::train ? 0x1000000000000000ULL
                                                   : 0x2000000000000000ULL) |
                                index);
        TaskBatch tb;
        tb.tokens.reserve(batch);
        tb.y = Matrix(batch, d);
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t t = draw_token(rng);
            tb.tokens.push_back(static_cast<std::int32_t>(t));
            std::copy(targets->row_ptr(t), targets->row_ptr(t) + d, tb.y.row_ptr(b));
        }
        return tb;
    };

    const auto make_spec = [&](EmbeddingMode mode) {
        EmbeddingSpec e;
        e.mode = mode;
        e.vocab_size = vocab;
        e.d = d;
        e.pitch_card = P;
        e.hand_card = H;
        e.pitch_map.resize(vocab);
        e.hand_map.resize(vocab);
        for (std::size_t t = 0; t < vocab; ++t) {
            e.pitch_map[t] = static_cast<std::uint32_t>(t / H);
            e.hand_map[t] = static_cast<std::uint32_t>(t % H);
        }
        NetworkSpec spec;
        spec.input_dim = d;
        spec.embedding = std::move(e);
        return spec;
    };

    TrainConfig tc = config.train;
    tc.batch = 1;  // per-token stream so update counts are exact occurrence counts
    tc.steps = config.embed_stream_len;
    tc.eval_every = std::max<std::size_t>(1, tc.steps / 10);
    tc.early_stop_patience = 1000000;  // run the full stream
    tc.loss.kind = LossKind::mse;

    const NetworkSpec naive_spec = make_spec(EmbeddingMode::naive);
    const NetworkSpec smart_spec = make_spec(EmbeddingMode::smart);

    SeededRng init_rng_n(tc.seed, 0x1417);
    const NetworkState naive_init = init_he(naive_spec, init_rng_n);
    SeededRng init_rng_s(tc.seed, 0x1417);
    const NetworkState smart_init = init_he(smart_spec, init_rng_s);

    const TrainResult naive_tr = train(naive_spec, task, tc);
    const TrainResult smart_tr = train(smart_spec, task, tc);

    EmbeddingAblationResult res;
    res.excluded_token = excluded;
    res.naive_params = param_count(naive_spec);
    res.smart_params = param_count(smart_spec);
    const auto cmp = param_count_report(smart_spec).embedding;
    res.reduction = cmp->reduction;
    res.rademacher_ratio = cmp->rademacher_ratio;
    res.naive_counter = naive_tr.counter;
    res.smart_counter = smart_tr.counter;

    // Token occurrences replayed from the shared stream.
    res.token_occurrences.assign(vocab, 0);
    for (std::size_t i = 0; i < tc.steps; ++i) {
        const TaskBatch b = task.next(Split::train, i, 1);
        ++res.token_occurrences[static_cast<std::size_t>(b.tokens[0])];
    }

    // Gradient sharing bookkeeping: smart pitch-row count == sum of the
    // naive-row counts over that pitch, exactly.
    res.counts_identity = true;
    res.strict_dominance = true;
    for (std::size_t p = 0; p < P; ++p) {
        std::uint64_t naive_sum = 0;
        std::size_t hands_seen = 0;
        for (std::size_t h = 0; h < H; ++h) {
            const std::uint64_t c = naive_tr.counter.naive_rows[p * H + h];
            naive_sum += c;
            hands_seen += c > 0;
        }
        if (smart_tr.counter.pitch_rows[p] != naive_sum) res.counts_identity = false;
        if (hands_seen >= 2) {
            for (std::size_t h = 0; h < H; ++h) {
                const std::uint64_t c = naive_tr.counter.naive_rows[p * H + h];
                if (c > 0 && smart_tr.counter.pitch_rows[p] <= c) res.strict_dominance = false;
            }
        }
    }

    // Zero-shot drift of the excluded pair.
    {
        double drift = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            drift = std::max(drift,
                             std::abs(naive_tr.best_state.embedding->naive(excluded, i) -
                                      naive_init.embedding->naive(excluded, i)));
        }
        res.naive_zero_shot_drift = drift;
    }
    {
        const auto composed = [&](const NetworkState& s) {
            std::vector<double> e(d);
            for (std::size_t i = 0; i < d; ++i) {
                e[i] = s.embedding->pitch(p_star, i) + s.embedding->hand(h_star, i);
            }
            return e;
        };
        const auto now = composed(smart_tr.best_state);
        const auto init = composed(smart_init);
        double drift = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            drift += (now[i] - init[i]) * (now[i] - init[i]);
        }
        res.smart_zero_shot_drift = std::sqrt(drift);
    }
    return res;
}

// --- result rendering ------------------------------------------------------

bool ExperimentResult::all_orderings_pass() const {
    return std::all_of(orderings.begin(), orderings.end(),
                       [](const OrderingCheck& c) { return c.pass; });
}

std::string ExperimentResult::results_csv() const {
    std::ostringstream os;
    os << "variant,dim,param_count,val_loss,effrank_entropy,effrank_95,eta,nuclear_norm,status\n";
    for (const auto& r : variants) {
        os << r.name << ',' << r.dim << ',' << r.param_count << ',' << r.val_loss << ','
           << r.effrank_entropy << ',' << r.effrank_95 << ',' << r.eta << ',' << r.nuclear_norm
           << ',' << (r.failed ? "Fail" : "OK") << '\n';
    }
    return os.str();
}

std::string ExperimentResult::summary_table() const {
    std::vector<const VariantResult*> order;
    for (const auto& r : variants) order.push_back(&r);
    std::sort(order.begin(), order.end(), [](const VariantResult* a, const VariantResult* b) {
        return a->val_loss < b->val_loss;
    });
    std::ostringstream os;
    os << std::left << std::setw(24) << "variant" << std::setw(8) << "dim" << std::setw(12)
       << "params" << std::setw(14) << "val_loss" << std::setw(12) << "effrank" << std::setw(10)
       << "eta" << "status\n";
    for (const auto* r : order) {
        os << std::left << std::setw(24) << r->name << std::setw(8) << r->dim << std::setw(12)
           << r->param_count << std::setw(14) << std::setprecision(5) << r->val_loss
           << std::setw(12) << std::setprecision(5) << r->effrank_entropy << std::setw(10)
           << std::setprecision(4) << r->eta << (r->failed ? "Fail" : "OK") << '\n';
    }
    for (const auto& c : orderings) {
        os << (c.pass ? "[ok]   " : "[FAIL] ") << c.name << ": " << c.detail << '\n';
    }
    return os.str();
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentResult result;
    result.config = config;
    result.config_hash = config.hash();

    if (config.experiment == "corpus_report") {
        const auto corpus = ingest_events_file(config.corpus_in);
        result.corpus_report_json = corpus_report_json(corpus, config.chunk_len, config.stride);
        return result;
    }
    if (config.experiment == "embedding_ablation") {
        EmbeddingAblationResult ab = run_embedding_ablation(config);
        result.orderings.push_back({"smart_params_below_naive",
                                    ab.smart_params < ab.naive_params,
                                    std::to_string(ab.smart_params) + " < " +
                                        std::to_string(ab.naive_params)});
        result.orderings.push_back({"gradient_sharing_identity", ab.counts_identity,
                                    "smart pitch counts == summed naive counts"});
        result.orderings.push_back(
            {"zero_shot_support",
             ab.naive_zero_shot_drift == 0.0 && ab.smart_zero_shot_drift > 1e-8,
             "naive drift " + fmt(ab.naive_zero_shot_drift) + ", smart drift " +
                 fmt(ab.smart_zero_shot_drift)});
        result.embedding = std::move(ab);
        return result;
    }

    const auto dims = config.dims.empty() ? std::vector<std::size_t>{config.task.dim}
                                          : config.dims;
    for (std::size_t dim : dims) {
        TaskSpec task = config.task;
        task.dim = dim;
        for (const auto& variant : config.variants) {
            result.variants.push_back(run_variant(variant, task, config.train));
        }
    }
    result.orderings = evaluate_orderings(config, result.variants);
    return result;
}

// --- file output -----------------------------------------------------------

namespace {

void atomic_write(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        }
        out << content;
    }
    fs::rename(tmp, path);
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

}  // namespace

std::string write_experiment_files(const ExperimentResult& result) {
    const fs::path dir = fs::path(result.config.output_dir) /
                         (result.config.experiment + "_" + result.config_hash.substr(0, 8));
    fs::create_directories(dir);

    if (!result.corpus_report_json.empty()) {
        atomic_write(dir / "corpus_report.json", result.corpus_report_json);
    }

    json variants = json::array();
    for (const auto& r : result.variants) {
        variants.push_back({{"name", r.name},
                            {"dim", r.dim},
                            {"param_count", r.param_count},
                            {"val_loss", r.val_loss},
                            {"effrank_entropy", r.effrank_entropy},
                            {"effrank_95", r.effrank_95},
                            {"eta", r.eta},
                            {"nuclear_norm", r.nuclear_norm},
                            {"status", r.failed ? "Fail" : "OK"},
                            {"analyzed_matrix", r.analyzed_matrix}});
    }
    json orderings = json::array();
    for (const auto& c : result.orderings) {
        orderings.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    json timing = json::object();
    timing["written_at"] = iso_now();
    for (const auto& r : result.variants) {
        timing["wall_time_s"][r.name + "_d" + std::to_string(r.dim)] = r.wall_time_s;
    }
    json j{{"experiment", result.config.experiment},
           {"config", json::parse(result.config.to_json())},
           {"config_hash", result.config_hash},
           {"variants", std::move(variants)},
           {"orderings", std::move(orderings)},
           {"timing", std::move(timing)}};
    if (result.embedding) {
        const auto& ab = *result.embedding;
        j["embedding_ablation"] = {{"naive_params", ab.naive_params},
                                   {"smart_params", ab.smart_params},
                                   {"reduction", ab.reduction},
                                   {"rademacher_ratio", ab.rademacher_ratio},
                                   {"counts_identity", ab.counts_identity},
                                   {"strict_dominance", ab.strict_dominance},
                                   {"naive_zero_shot_drift", ab.naive_zero_shot_drift},
                                   {"smart_zero_shot_drift", ab.smart_zero_shot_drift}};
    }
    // Generator laws, seeds and analyzed matrices travel with every file.
    json provenance{{"seeds", {{"task", result.config.task.seed}, {"train", result.config.train.seed}}},
                    {"config_hash", result.config_hash}};
    if (result.config.experiment != "corpus_report" &&
        result.config.experiment != "embedding_ablation" && !result.config.dims.empty()) {
        provenance["dims"] = result.config.dims;
    }
    if (result.config.experiment == "svd_paradox" ||
        result.config.experiment == "hierarchy_of_topology" ||
        result.config.experiment == "kill_shot") {
        TaskSpec t = result.config.task;
        provenance["generator_law"] = make_task(t).law;
    }
    j["provenance"] = std::move(provenance);

    atomic_write(dir / "results.json", j.dump(2) + "\n");
    atomic_write(dir / "results.csv", result.results_csv());
    for (const auto& r : result.variants) {
        atomic_write(dir / ("history_" + r.name + "_d" + std::to_string(r.dim) + ".csv"),
                     r.history.to_csv());
        if (r.partition) {
            atomic_write(dir / ("partition_" + r.name + "_d" + std::to_string(r.dim) + ".json"),
                         r.partition->to_json());
        }
    }
    return dir.string();
}

int run_and_write(const ExperimentConfig& config) {
    ExperimentResult result = run_experiment(config);
    const std::string dir = write_experiment_files(result);
    std::printf("%s\n", result.summary_table().c_str());
    std::printf("results written to %s\n", dir.c_str());
    return result.all_orderings_pass() ? 0 : 2;
}

// --- report merge ------------------------------------------------------------

MergedReport report_results(const std::string& dir) {
    MergedReport rep;
    if (!fs::exists(dir)) {
        throw std::runtime_error("report: directory does not exist: " + dir);
    }
    struct Row {
        std::string experiment, variant, status;
        std::size_t dim, params, effrank_95;
        double val_loss, effrank_entropy, eta, nuclear;
    };
    std::vector<Row> rows;
    std::vector<std::pair<std::string, bool>> orderings;
    std::vector<std::string> seen_hashes;

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename() == "results.json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        json j;
        try {
            std::ifstream in(path);
            in >> j;
            const std::string hash = j.at("config_hash").get<std::string>();
            if (std::find(seen_hashes.begin(), seen_hashes.end(), hash) != seen_hashes.end()) {
                rep.warnings.push_back("duplicate config hash " + hash + " at " + path.string() +
                                       ", skipped");
                continue;
            }
            seen_hashes.push_back(hash);
            const std::string experiment = j.at("experiment").get<std::string>();
            for (const auto& v : j.at("variants")) {
                rows.push_back({experiment, v.at("name").get<std::string>(),
                                v.at("status").get<std::string>(), v.at("dim").get<std::size_t>(),
                                v.at("param_count").get<std::size_t>(),
                                v.at("effrank_95").get<std::size_t>(),
                                v.at("val_loss").get<double>(),
                                v.at("effrank_entropy").get<double>(), v.at("eta").get<double>(),
                                v.at("nuclear_norm").get<double>()});
            }
            for (const auto& o : j.at("orderings")) {
                orderings.emplace_back(experiment + "/" + o.at("name").get<std::string>(),
                                       o.at("pass").get<bool>());
            }
            ++rep.result_count;
        } catch (const std::exception& e) {
            rep.warnings.push_back("skipped malformed result " + path.string() + ": " + e.what());
        }
    }
    if (rep.result_count == 0 && rep.warnings.empty()) {
        throw std::runtime_error("report: no results.json found under " + dir);
    }

    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.val_loss < b.val_loss;
    });
    std::ostringstream csv;
    csv << "experiment,variant,dim,param_count,val_loss,effrank_entropy,effrank_95,eta,"
           "nuclear_norm,status\n";
    std::ostringstream text;
    text << std::left << std::setw(22) << "experiment" << std::setw(24) << "variant"
         << std::setw(8) << "dim" << std::setw(14) << "val_loss" << std::setw(12) << "effrank"
         << "status\n";
    for (const auto& r : rows) {
        csv << r.experiment << ',' << r.variant << ',' << r.dim << ',' << r.params << ','
            << r.val_loss << ',' << r.effrank_entropy << ',' << r.effrank_95 << ',' << r.eta
            << ',' << r.nuclear << ',' << r.status << '\n';
        text << std::left << std::setw(22) << r.experiment << std::setw(24) << r.variant
             << std::setw(8) << r.dim << std::setw(14) << std::setprecision(5) << r.val_loss
             << std::setw(12) << std::setprecision(5) << r.effrank_entropy << r.status << '\n';
    }
    for (const auto& [name, pass] : orderings) {
        text << (pass ? "[ok]   " : "[FAIL] ") << name << '\n';
    }
    for (const auto& w : rep.warnings) text << "warning: " << w << '\n';
    rep.csv = csv.str();
    rep.text = text.str();
    return rep;
}

// --- corpus report -----------------------------------------------------------

std::string corpus_report_json(const std::vector<Piece>& corpus, std::size_t chunk_len,
                               std::size_t stride) {
    const TokenVocab vocab = TokenVocab::from_corpus(corpus);
    std::vector<std::vector<std::int32_t>> tokens;
    tokens.reserve(corpus.size());
    std::size_t total_tokens = 0, total_events = 0;
    for (const auto& piece : corpus) {
        tokens.push_back(tokenize(piece, vocab));
        total_tokens += tokens.back().size();
        total_events += piece.size();
    }

    json j;
    j["pieces"] = corpus.size();
    j["events"] = total_events;
    j["tokens"] = total_tokens;
    j["vocab_size"] = vocab.size();

    if (total_events > 0) {
        const PitchHandNmi ph = pitch_hand_nmi(tokens, vocab);
        j["pitch_hand_nmi"] = ph.value;
        j["pitch_hand_joint_total"] = ph.joint.total();
        j["factorization_loss_bits"] = factorization_loss(ph.joint);
        j["mutual_information_bits"] = mutual_information(ph.joint);
    }

    double balance = 0.0, contour = 0.0, rhythm = 0.0;
    std::size_t n_bal = 0, n_con = 0, n_rhy = 0;
    for (const auto& piece : corpus) {
        const TextureReport t = texture_metrics(piece);
        balance += t.hand_balance;
        ++n_bal;
        if (t.contour_defined) {
            contour += t.contour_score;
            ++n_con;
        }
        if (t.rhythm_defined) {
            rhythm += t.rhythm_overlap;
            ++n_rhy;
        }
    }
    if (n_bal) {
        j["texture"] = {{"hand_balance", balance / n_bal},
                        {"contour_score", n_con ? contour / n_con : 0.0},
                        {"contour_defined_pieces", n_con},
                        {"rhythm_overlap", n_rhy ? rhythm / n_rhy : 0.0},
                        {"rhythm_defined_pieces", n_rhy}};
    }

    if (!corpus.empty() && total_events > 0) {
        const ChunkBalanceReport cb = chunk_balance(tokens, chunk_len, stride, vocab);
        j["chunking"] = {{"chunk_len", chunk_len},
                         {"stride", stride},
                         {"chunks", cb.chunks.size()},
                         {"prefix_mean_lh_ratio", cb.prefix_mean_ratio},
                         {"chunk_mean_lh_ratio", cb.chunk_mean_ratio},
                         {"global_lh_ratio", cb.global_ratio}};
        const SavingsReport sv = embedding_savings(vocab, 64);
        j["embedding_savings"] = {{"naive_rows", sv.naive_rows},
                                  {"smart_rows", sv.smart_rows},
                                  {"reduction", sv.reduction},
                                  {"rademacher_ratio", sv.rademacher_ratio},
                                  {"factorization_larger", sv.factorization_larger}};
    }
    return j.dump(2) + "\n";
}

// --- pinned paper-shaped defaults ---------------------------------------

ExperimentConfig pinned_defaults(const std::string& experiment) {
    ExperimentConfig c;
    c.experiment = experiment;
    c.train.batch = 128;
    c.train.lr = 1e-3;
    c.train.seed = 7;
    c.task.seed = 42;
    c.task.train_n = 10000;
    c.task.val_n = 2048;

    const auto variant = [](const std::string& name, VariantSpec::Arch arch, std::size_t depth,
                            std::size_t blocks, std::size_t block_size, std::size_t inner,
                            bool residual, bool layernorm) {
        VariantSpec v;
        v.name = name;
        v.arch = arch;
        v.depth = depth;
        v.blocks = blocks;
        v.block_size = block_size;
        v.inner_width = inner;
        v.residual = residual;
        v.layernorm = layernorm;
        return v;
    };

    if (experiment == "svd_paradox") {
        c.task.kind = TaskKind::highrank_recovery;
        c.task.dim = 512;
        c.task.noise_sigma = 0.01;
        c.train.steps = 3000;
        c.train.eval_every = 100;
        c.train.early_stop_patience = 8;
        c.variants = {
            variant("dense_4x512", VariantSpec::Arch::dense, 4, 8, 0, 0, true, true),
            variant("smart_v1", VariantSpec::Arch::v1, 2, 8, 0, 0, true, false),
            variant("smart_v2", VariantSpec::Arch::v2, 2, 8, 0, 0, true, false),
            variant("smart_v2_deep", VariantSpec::Arch::v2, 8, 8, 0, 0, true, false),
            variant("smart_v2_wide", VariantSpec::Arch::v2, 1, 8, 0, 1024, true, false),
        };
    } else if (experiment == "hierarchy_of_topology") {
        c.task.kind = TaskKind::extreme_modular;
        c.task.dim = 128;
        c.task.groups = 8;
        c.task.scramble = true;
        c.task.noise_sigma = 0.01;
        c.train.steps = 4000;
        c.train.eval_every = 200;
        c.train.early_stop_patience = 8;
        c.variants = {
            variant("dense", VariantSpec::Arch::dense, 1, 8, 0, 0, false, false),
            variant("smart_v1", VariantSpec::Arch::v1, 1, 8, 0, 0, false, false),
            variant("smart_v2", VariantSpec::Arch::v2, 1, 8, 0, 0, false, false),
            variant("smart_v3", VariantSpec::Arch::v3, 1, 8, 0, 0, false, false),
        };
    } else if (experiment == "kill_shot") {
        c.task.kind = TaskKind::factorized_manifold;
        c.task.dim = 1024;
        c.task.groups = 8;
        c.task.noise_sigma = 0.0;
        c.dims = {128, 256, 512, 1024};
        c.train.steps = 800;
        c.train.eval_every = 50;
        c.train.early_stop_patience = 6;
        c.variants = {
            variant("dense", VariantSpec::Arch::dense, 2, 8, 0, 0, true, false),
            variant("smart_v4", VariantSpec::Arch::v4, 2, 8, 128, 0, true, false),
        };
    } else if (experiment == "embedding_ablation") {
        c.embed_pitches = 16;
        c.embed_hands = 4;
        c.embed_dim = 16;
        c.embed_stream_len = 10000;
        c.train.lr = 1e-2;
    } else {
        throw std::invalid_argument("pinned_defaults: no defaults for '" + experiment + "'");
    }
    c.validate();
    return c;
}

}  // namespace blocklab
