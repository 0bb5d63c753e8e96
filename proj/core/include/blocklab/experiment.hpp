#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blocklab/corpus.hpp"
#include "blocklab/net.hpp"
#include "blocklab/synth.hpp"
#include "blocklab/topology.hpp"
#include "blocklab/train.hpp"

namespace blocklab {

/// One model variant in an experiment grid. arch selects the topology
/// strategy: dense layers; v1 contiguous blocks without mixing; v2 contiguous
/// blocks with seeded random per-layer shuffles; v3 NMI-Ward partition,
/// no shuffles; v4 NMI-Ward partition with the cyclic conveyor schedule.
/// inner_width > 0 inserts dense in/out adapters around `depth` repeated
/// layers at that width.
struct VariantSpec {
    enum class Arch { dense, v1, v2, v3, v4 };
    std::string name;
    Arch arch = Arch::dense;
    std::size_t depth = 1;
    std::size_t blocks = 8;
    std::size_t block_size = 0;  // when set, overrides blocks with width / block_size
    std::size_t inner_width = 0;
    Activation activation = Activation::none;
    bool residual = false;
    bool layernorm = false;

    std::size_t blocks_at(std::size_t width) const {
        return block_size ? width / block_size : blocks;
    }
};

struct ExperimentConfig {
    std::string experiment;  // svd_paradox | hierarchy_of_topology | kill_shot |
                             // embedding_ablation | corpus_report
    TaskSpec task;
    std::vector<std::size_t> dims;  // optional sweep; empty = {task.dim}
    TrainConfig train;
    std::vector<VariantSpec> variants;
    std::string output_dir = "out";
    std::string corpus_in;          // corpus_report input path
    std::size_t chunk_len = 256;    // corpus_report
    std::size_t stride = 128;       // corpus_report

    // embedding_ablation grid (token factor cardinalities and stream length)
    std::size_t embed_pitches = 16;
    std::size_t embed_hands = 4;
    std::size_t embed_dim = 16;
    std::size_t embed_stream_len = 10000;

    void validate() const;
    std::string to_json() const;
    static ExperimentConfig parse_json(const std::string& text);
    static ExperimentConfig load(const std::string& path);
    /// FNV-1a over the canonical config serialization, output_dir excluded.
    std::string hash() const;
};

struct VariantResult {
    std::string name;
    std::size_t dim = 0;
    std::size_t param_count = 0;
    double val_loss = 0.0;
    double effrank_entropy = 0.0;
    std::size_t effrank_95 = 0;
    double eta = 0.0;
    double nuclear_norm = 0.0;
    double wall_time_s = 0.0;
    bool failed = false;  // diverged; run continues
    std::string analyzed_matrix;
    TrainHistory history;
    std::optional<BlockPartition> partition;  // recovered for v3/v4
};

struct OrderingCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct EmbeddingAblationResult {
    std::size_t naive_params = 0;
    std::size_t smart_params = 0;
    double reduction = 0.0;
    double rademacher_ratio = 0.0;
    bool counts_identity = false;
    bool strict_dominance = false;
    double naive_zero_shot_drift = 0.0;
    double smart_zero_shot_drift = 0.0;
    std::size_t excluded_token = 0;
    UpdateCounter naive_counter;
    UpdateCounter smart_counter;
    std::vector<std::uint64_t> token_occurrences;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::string config_hash;
    std::vector<VariantResult> variants;
    std::vector<OrderingCheck> orderings;
    std::optional<EmbeddingAblationResult> embedding;
    std::string corpus_report_json;

    bool all_orderings_pass() const;
    std::string results_csv() const;  // deterministic body, no timestamps
    std::string summary_table() const;
};

/// Trains every variant with the shared task and seed, evaluates the rank
/// diagnostics on the Jacobian into the widest layer at a seeded probe, and
/// evaluates the experiment's expected orderings. Pure compute, no file IO.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Writes results.json, results.csv and per-variant history CSVs under
/// output_dir/<experiment>_<hash8>/ (write-temp-then-rename).
std::string write_experiment_files(const ExperimentResult& result);

/// run + write; returns the process exit status (0 = orderings hold,
/// 2 = ordering violation).
int run_and_write(const ExperimentConfig& config);

struct MergedReport {
    std::string csv;
    std::string text;
    std::vector<std::string> warnings;
    std::size_t result_count = 0;
};

/// Merges every results.json found under dir (one level of experiment
/// subdirectories), deduplicates identical config hashes, sorts by val_loss
/// and flags ordering violations. Malformed files are skipped with a named
/// warning.
MergedReport report_results(const std::string& dir);

/// Builds the network for a variant at the given task dim; recovers the
/// NMI partition for v3/v4 from seeded task samples.
NetworkSpec build_variant_network(const VariantSpec& variant, const TaskSpec& task,
                                  const TrainConfig& train,
                                  std::optional<BlockPartition>* recovered = nullptr);

/// Full corpus analysis (tokenization, NMI, texture, chunk balance, savings)
/// rendered as a JSON report.
std::string corpus_report_json(const std::vector<Piece>& corpus, std::size_t chunk_len,
                               std::size_t stride);

EmbeddingAblationResult run_embedding_ablation(const ExperimentConfig& config);

/// The pinned paper-shaped run for each experiment kind; the files under
/// configs/ mirror these (a unit test keeps them in sync).
ExperimentConfig pinned_defaults(const std::string& experiment);

}  // namespace blocklab
