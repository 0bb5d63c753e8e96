#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blocklab/matrix.hpp"
#include "blocklab/rng.hpp"
#include "blocklab/topology.hpp"

namespace blocklab {

enum class LayerKind { dense, block_diagonal };
enum class Activation { none, relu };

/// One layer. Computation order: input permutation, linear map (dense or
/// per-block), layernorm, activation, residual add of the layer input.
/// block_diagonal requires a partition with square equal blocks matching
/// in_dim == out_dim; residual requires in_dim == out_dim.
struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::optional<BlockPartition> partition;
    std::optional<PermutationVec> input_perm;
    Activation activation = Activation::none;
    bool residual = false;
    bool layernorm = false;

    void validate() const;
    /// Per-unit fan-in: in_dim for dense, block size for block_diagonal.
    std::size_t fan_in() const;
    std::size_t param_count() const;
};

enum class EmbeddingMode { naive, smart };

/// Token embedding front end. naive: one row per token id. smart: additive
/// factorized rows, e(t) = pitch[pitch_map[t]] + hand[hand_map[t]].
struct EmbeddingSpec {
    EmbeddingMode mode = EmbeddingMode::naive;
    std::size_t vocab_size = 0;
    std::size_t d = 0;
    std::vector<std::uint32_t> pitch_map;
    std::vector<std::uint32_t> hand_map;
    std::size_t pitch_card = 0;
    std::size_t hand_card = 0;

    void validate() const;
    std::size_t param_count() const;  // rows * d for the active mode
};

struct NetworkSpec {
    std::size_t input_dim = 0;  // equals embedding d when embedding is present
    std::optional<EmbeddingSpec> embedding;
    std::vector<LayerSpec> layers;

    void validate() const;
    std::size_t output_dim() const;
    /// Index of the widest layer output (input counts as layer -1); used to
    /// pick the analysis matrix for rank diagnostics.
    std::size_t widest_layer() const;
};

/// Applies a ShuffleSchedule to the block layers of a spec, resolving
/// input_perm per layer index.
void apply_shuffle_schedule(NetworkSpec& spec, const ShuffleSchedule& schedule);

struct LayerParams {
    Matrix dense;                // dense kind: out_dim x in_dim
    std::vector<Matrix> blocks;  // block kind: one bs x bs matrix per block
    std::vector<double> ln_gain;
    std::vector<double> ln_offset;
};

struct EmbeddingParams {
    Matrix naive;  // vocab_size x d
    Matrix pitch;  // pitch_card x d
    Matrix hand;   // hand_card x d
};

struct NetworkState {
    std::vector<LayerParams> layers;
    std::optional<EmbeddingParams> embedding;
    std::uint64_t revision = 0;

    /// Binary-free JSON checkpoint: shapes plus row-major values.
    std::string to_json() const;
    static NetworkState parse_json(const std::string& text);
    void save(const std::string& path) const;
    static NetworkState load(const std::string& path);
};

/// Gradients mirror the parameter layout; input_grad is dL/dx.
struct NetworkGrads {
    std::vector<LayerParams> layers;
    std::optional<EmbeddingParams> embedding;
    Matrix input_grad;
    std::vector<std::uint32_t> touched_naive;  // embedding rows with nonzero grads
    std::vector<std::uint32_t> touched_pitch;
    std::vector<std::uint32_t> touched_hand;
};

/// He initialization: every weight entry N(0, 2/N_in), with N_in the per-unit
/// fan-in (table row count for embeddings). LayerNorm gain 1, offset 0.
NetworkState init_he(const NetworkSpec& spec, SeededRng& rng);

std::size_t param_count(const NetworkSpec& spec);

struct EmbeddingComparison {
    std::size_t naive_rows = 0;
    std::size_t smart_rows = 0;
    double reduction = 0.0;         // (naive - smart) / naive
    double rademacher_ratio = 0.0;  // sqrt(smart / naive)
};

struct ParamCountReport {
    std::size_t total = 0;
    std::optional<EmbeddingComparison> embedding;
};

ParamCountReport param_count_report(const NetworkSpec& spec);

struct ForwardCache {
    std::uint64_t state_revision = 0;
    Matrix input;
    std::vector<std::int32_t> tokens;
    struct LayerCache {
        Matrix x_in;
        Matrix x_perm;
        Matrix lin_out;                  // pre-layernorm
        Matrix ln_hat;                   // normalized values
        std::vector<double> ln_invstd;   // per sample
        Matrix pre_act;                  // post-layernorm, pre-activation
        Matrix out;
    };
    std::vector<LayerCache> layers;
    Matrix output;
};

/// Batch forward; x is batch x input_dim, one sample per row.
Matrix forward(const NetworkState& state, const NetworkSpec& spec, const Matrix& x,
               ForwardCache* cache = nullptr);

/// Token forward through the embedding front end.
Matrix forward_tokens(const NetworkState& state, const NetworkSpec& spec,
                      const std::vector<std::int32_t>& tokens,
                      ForwardCache* cache = nullptr);

/// Exact analytic gradients for all parameters and the input. The cache must
/// come from a forward on the same state revision.
NetworkGrads backward(const NetworkState& state, const NetworkSpec& spec,
                      const ForwardCache& cache, const Matrix& output_grad);

/// Single-token embedding lookup.
std::vector<double> embed(const EmbeddingSpec& spec, const EmbeddingParams& tables,
                          std::int32_t token);

/// Jacobian of the network output (or of layer `upto_layer`'s output) with
/// respect to the input, evaluated at `probe`. For layers with activation
/// none and no layernorm this is the exact linear map and the probe is
/// irrelevant; relu gates freeze at the probe's sign pattern (pre-activation
/// exactly 0 counts as active), layernorm contributes its Jacobian at the
/// probe. Default probe: the zero vector.
Matrix end_to_end_linear_map(const NetworkState& state, const NetworkSpec& spec,
                             const std::vector<double>* probe = nullptr,
                             std::size_t upto_layer = static_cast<std::size_t>(-1));

struct FaultReport {
    std::vector<double> scores;
    std::size_t argmax = 0;
    std::vector<bool> degenerate;  // block subspace had no usable basis
};

/// Per-block responsibility of an output error vector. For every block layer
/// whose partition equals p, the columns of the downstream Jacobian at that
/// block's output positions span the reachable subspace V_k; the score is the
/// norm of the projection of error_vec onto orthonormalized V_k.
FaultReport fault_localize(const NetworkState& state, const NetworkSpec& spec,
                           const std::vector<double>& error_vec, const BlockPartition& p,
                           const std::vector<double>* probe = nullptr);

}  // namespace blocklab
