#include "blocklab/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "blocklab/linalg.hpp"
#include "json.hpp"

namespace blocklab {

static constexpr double kLayerNormEps = 1e-5;

void LayerSpec::validate() const {
    if (in_dim == 0 || out_dim == 0) {
        throw std::invalid_argument("LayerSpec: zero dimension");
    }
    if (kind == LayerKind::block_diagonal) {
        if (!partition) {
            throw std::invalid_argument("LayerSpec: block_diagonal layer needs a partition");
        }
        if (in_dim != out_dim || partition->dim != in_dim) {
            throw std::invalid_argument("LayerSpec: block_diagonal layer must be square with partition dim == in_dim");
        }
        if (!partition->equal_sized()) {
            throw std::invalid_argument("LayerSpec: block_diagonal layer requires equal block sizes");
        }
    }
    if (residual && in_dim != out_dim) {
        throw std::invalid_argument("LayerSpec: residual requires in_dim == out_dim");
    }
    if (input_perm && input_perm->size() != in_dim) {
        throw std::invalid_argument("LayerSpec: input permutation length != in_dim");
    }
}

std::size_t LayerSpec::fan_in() const {
    return kind == LayerKind::block_diagonal ? partition->block_sizes[0] : in_dim;
}

std::size_t LayerSpec::param_count() const {
    std::size_t n = 0;
    if (kind == LayerKind::dense) {
        n = in_dim * out_dim;
    } else {
        for (std::size_t s : partition->block_sizes) n += s * s;
    }
    if (layernorm) n += 2 * out_dim;
    return n;
}

void EmbeddingSpec::validate() const {
    if (vocab_size == 0 || d == 0) {
        throw std::invalid_argument("EmbeddingSpec: zero vocab or dimension");
    }
    if (pitch_map.size() != vocab_size || hand_map.size() != vocab_size) {
        throw std::invalid_argument("EmbeddingSpec: factor maps must be total over the vocabulary");
    }
    for (std::size_t t = 0; t < vocab_size; ++t) {
        if (pitch_map[t] >= pitch_card || hand_map[t] >= hand_card) {
            throw std::invalid_argument("EmbeddingSpec: factor index out of range at token " +
                                        std::to_string(t));
        }
    }
}

std::size_t EmbeddingSpec::param_count() const {
    return mode == EmbeddingMode::naive ? vocab_size * d : (pitch_card + hand_card) * d;
}

void NetworkSpec::validate() const {
    if (embedding) {
        embedding->validate();
        if (embedding->d != input_dim) {
            throw std::invalid_argument("NetworkSpec: embedding d must equal input_dim");
        }
    }
    std::size_t cur = input_dim;
    for (const auto& layer : layers) {
        layer.validate();
        if (layer.in_dim != cur) {
            throw std::invalid_argument("NetworkSpec: layer input dim " + std::to_string(layer.in_dim) +
                                        " does not chain from " + std::to_string(cur));
        }
        cur = layer.out_dim;
    }
}

std::size_t NetworkSpec::output_dim() const {
    return layers.empty() ? input_dim : layers.back().out_dim;
}

std::size_t NetworkSpec::widest_layer() const {
    std::size_t best = layers.empty() ? static_cast<std::size_t>(-1) : 0;
    std::size_t width = layers.empty() ? input_dim : layers[0].out_dim;
    for (std::size_t i = 1; i < layers.size(); ++i) {
        if (layers[i].out_dim > width) {
            width = layers[i].out_dim;
            best = i;
        }
    }
    return best;
}

void apply_shuffle_schedule(NetworkSpec& spec, const ShuffleSchedule& schedule) {
    std::size_t block_layer = 0;
    for (auto& layer : spec.layers) {
        if (layer.kind != LayerKind::block_diagonal) continue;
        const BlockPartition* part = layer.partition ? &*layer.partition : nullptr;
        layer.input_perm = schedule.perm_for_layer(block_layer, layer.in_dim, part);
        ++block_layer;
    }
}

NetworkState init_he(const NetworkSpec& spec, SeededRng& rng) {
    spec.validate();
    NetworkState state;
    state.layers.reserve(spec.layers.size());
    if (spec.embedding) {
        const auto& e = *spec.embedding;
        EmbeddingParams p;
        SeededRng r0 = rng.split(0xE0);
        p.naive = Matrix::gaussian(e.vocab_size, e.d, r0, 0.0, std::sqrt(2.0 / double(e.vocab_size)));
        SeededRng r1 = rng.split(0xE1);
        p.pitch = Matrix::gaussian(e.pitch_card, e.d, r1, 0.0, std::sqrt(2.0 / double(e.pitch_card)));
        SeededRng r2 = rng.split(0xE2);
        p.hand = Matrix::gaussian(e.hand_card, e.d, r2, 0.0, std::sqrt(2.0 / double(e.hand_card)));
        state.embedding = std::move(p);
    }
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& ls = spec.layers[l];
        LayerParams p;
        SeededRng lr = rng.split(0x100 + l);
        const double stddev = std::sqrt(2.0 / static_cast<double>(ls.fan_in()));
        if (ls.kind == LayerKind::dense) {
            p.dense = Matrix::gaussian(ls.out_dim, ls.in_dim, lr, 0.0, stddev);
        } else {
            const auto& part = *ls.partition;
            p.blocks.reserve(part.k);
            for (std::size_t b = 0; b < part.k; ++b) {
                const std::size_t bs = part.block_sizes[b];
                p.blocks.push_back(Matrix::gaussian(bs, bs, lr, 0.0, stddev));
            }
        }
        if (ls.layernorm) {
            p.ln_gain.assign(ls.out_dim, 1.0);
            p.ln_offset.assign(ls.out_dim, 0.0);
        }
        state.layers.push_back(std::move(p));
    }
    return state;
}

std::size_t param_count(const NetworkSpec& spec) {
    std::size_t n = 0;
    if (spec.embedding) n += spec.embedding->param_count();
    for (const auto& layer : spec.layers) n += layer.param_count();
    return n;
}

ParamCountReport param_count_report(const NetworkSpec& spec) {
    ParamCountReport rep;
    rep.total = param_count(spec);
    if (spec.embedding) {
        const auto& e = *spec.embedding;
        EmbeddingComparison cmp;
        cmp.naive_rows = e.vocab_size;
        cmp.smart_rows = e.pitch_card + e.hand_card;
        cmp.reduction = (static_cast<double>(cmp.naive_rows) - static_cast<double>(cmp.smart_rows)) /
                        static_cast<double>(cmp.naive_rows);
        cmp.rademacher_ratio = std::sqrt(static_cast<double>(cmp.smart_rows) /
                                         static_cast<double>(cmp.naive_rows));
        rep.embedding = cmp;
    }
    return rep;
}

std::vector<double> embed(const EmbeddingSpec& spec, const EmbeddingParams& tables,
                          std::int32_t token) {
    if (token < 0 || static_cast<std::size_t>(token) >= spec.vocab_size) {
        throw std::out_of_range("embed: token " + std::to_string(token) + " out of range");
    }
    std::vector<double> v(spec.d, 0.0);
    if (spec.mode == EmbeddingMode::naive) {
        const double* row = tables.naive.row_ptr(token);
        std::copy(row, row + spec.d, v.begin());
    } else {
        const double* pr = tables.pitch.row_ptr(spec.pitch_map[token]);
        const double* hr = tables.hand.row_ptr(spec.hand_map[token]);
        for (std::size_t i = 0; i < spec.d; ++i) v[i] = pr[i] + hr[i];
    }
    return v;
}

static Matrix embed_batch(const EmbeddingSpec& spec, const EmbeddingParams& tables,
                          const std::vector<std::int32_t>& tokens) {
    Matrix out(tokens.size(), spec.d);
    for (std::size_t b = 0; b < tokens.size(); ++b) {
        const auto v = embed(spec, tables, tokens[b]);
        std::copy(v.begin(), v.end(), out.row_ptr(b));
    }
    return out;
}

// out columns I_b = xp columns I_b times W_b^T, per block.
static Matrix block_apply(const Matrix& xp, const LayerSpec& ls, const LayerParams& p) {
    const auto& part = *ls.partition;
    const std::size_t batch = xp.rows();
    Matrix out(batch, ls.out_dim);
    for (std::size_t b = 0; b < part.k; ++b) {
        const auto members = part.block_members(b);
        const std::size_t bs = members.size();
        const Matrix& w = p.blocks[b];
        for (std::size_t s = 0; s < batch; ++s) {
            const double* xrow = xp.row_ptr(s);
            double* orow = out.row_ptr(s);
            for (std::size_t i = 0; i < bs; ++i) {
                const double* wrow = w.row_ptr(i);
                double acc = 0.0;
                for (std::size_t j = 0; j < bs; ++j) acc += wrow[j] * xrow[members[j]];
                orow[members[i]] = acc;
            }
        }
    }
    return out;
}

Matrix forward(const NetworkState& state, const NetworkSpec& spec, const Matrix& x,
               ForwardCache* cache) {
    if (x.cols() != spec.input_dim) {
        throw std::invalid_argument("forward: input dim " + std::to_string(x.cols()) +
                                    " != spec input_dim " + std::to_string(spec.input_dim));
    }
    if (!x.all_finite()) {
        throw std::invalid_argument("forward: non-finite input");
    }
    if (state.layers.size() != spec.layers.size()) {
        throw std::invalid_argument("forward: state/spec layer count mismatch");
    }
    if (cache) {
        cache->state_revision = state.revision;
        cache->input = x;
        cache->layers.clear();
        cache->layers.resize(spec.layers.size());
    }
    Matrix cur = x;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& ls = spec.layers[l];
        const auto& p = state.layers[l];
        ForwardCache::LayerCache* lc = cache ? &cache->layers[l] : nullptr;
        if (lc) lc->x_in = cur;

        Matrix xp = ls.input_perm ? permute_cols(cur, *ls.input_perm) : cur;
        if (lc) lc->x_perm = xp;

        Matrix h = ls.kind == LayerKind::dense ? matmul_nt(xp, p.dense) : block_apply(xp, ls, p);
        if (lc) lc->lin_out = h;

        if (ls.layernorm) {
            const std::size_t n = ls.out_dim;
            Matrix hat(h.rows(), n);
            std::vector<double> invstd(h.rows());
            for (std::size_t s = 0; s < h.rows(); ++s) {
                const double* row = h.row_ptr(s);
                double mean = 0.0;
                for (std::size_t i = 0; i < n; ++i) mean += row[i];
                mean /= static_cast<double>(n);
                double var = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double dv = row[i] - mean;
                    var += dv * dv;
                }
                var /= static_cast<double>(n);
                const double is = 1.0 / std::sqrt(var + kLayerNormEps);
                invstd[s] = is;
                double* hrow = hat.row_ptr(s);
                for (std::size_t i = 0; i < n; ++i) hrow[i] = (row[i] - mean) * is;
            }
            Matrix scaled(h.rows(), n);
            for (std::size_t s = 0; s < h.rows(); ++s) {
                const double* hrow = hat.row_ptr(s);
                double* orow = scaled.row_ptr(s);
                for (std::size_t i = 0; i < n; ++i) orow[i] = p.ln_gain[i] * hrow[i] + p.ln_offset[i];
            }
            if (lc) {
                lc->ln_hat = hat;
                lc->ln_invstd = invstd;
            }
            h = std::move(scaled);
        }
        if (lc) lc->pre_act = h;

        if (ls.activation == Activation::relu) {
            for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
        }
        if (ls.residual) h += cur;
        if (lc) lc->out = h;
        cur = std::move(h);
    }
    if (cache) cache->output = cur;
    return cur;
}

Matrix forward_tokens(const NetworkState& state, const NetworkSpec& spec,
                      const std::vector<std::int32_t>& tokens, ForwardCache* cache) {
    if (!spec.embedding || !state.embedding) {
        throw std::invalid_argument("forward_tokens: spec has no embedding front end");
    }
    Matrix x = embed_batch(*spec.embedding, *state.embedding, tokens);
    Matrix out = forward(state, spec, x, cache);
    if (cache) cache->tokens = tokens;
    return out;
}

static LayerParams zero_like(const LayerSpec& ls, const LayerParams& p) {
    LayerParams g;
    if (ls.kind == LayerKind::dense) {
        g.dense = Matrix(p.dense.rows(), p.dense.cols());
    } else {
        g.blocks.reserve(p.blocks.size());
        for (const auto& b : p.blocks) g.blocks.emplace_back(b.rows(), b.cols());
    }
    if (ls.layernorm) {
        g.ln_gain.assign(p.ln_gain.size(), 0.0);
        g.ln_offset.assign(p.ln_offset.size(), 0.0);
    }
    return g;
}

NetworkGrads backward(const NetworkState& state, const NetworkSpec& spec,
                      const ForwardCache& cache, const Matrix& output_grad) {
    if (cache.state_revision != state.revision) {
        throw std::logic_error("backward: stale cache (state was updated after forward)");
    }
    if (cache.layers.size() != spec.layers.size()) {
        throw std::invalid_argument("backward: cache does not match spec");
    }
    if (output_grad.rows() != cache.input.rows() || output_grad.cols() != spec.output_dim()) {
        throw std::invalid_argument("backward: output gradient shape mismatch");
    }

    NetworkGrads grads;
    grads.layers.resize(spec.layers.size());

    Matrix d_out = output_grad;
    for (std::size_t l = spec.layers.size(); l-- > 0;) {
        const auto& ls = spec.layers[l];
        const auto& p = state.layers[l];
        const auto& lc = cache.layers[l];
        LayerParams g = zero_like(ls, p);

        Matrix d_residual;  // dL/d x_in contributed by the residual path
        if (ls.residual) d_residual = d_out;

        Matrix d_act = std::move(d_out);  // gradient at the post-activation value
        if (ls.activation == Activation::relu) {
            for (std::size_t i = 0; i < d_act.data().size(); ++i) {
                if (lc.pre_act.data()[i] <= 0.0) d_act.data()[i] = 0.0;
            }
        }

        Matrix d_lin;  // gradient at lin_out
        if (ls.layernorm) {
            const std::size_t n = ls.out_dim;
            d_lin = Matrix(d_act.rows(), n);
            for (std::size_t s = 0; s < d_act.rows(); ++s) {
                const double* dy = d_act.row_ptr(s);
                const double* hat = lc.ln_hat.row_ptr(s);
                const double is = lc.ln_invstd[s];
                double sum_dhat = 0.0, sum_dhat_hat = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double dhat = dy[i] * p.ln_gain[i];
                    sum_dhat += dhat;
                    sum_dhat_hat += dhat * hat[i];
                }
                const double inv_n = 1.0 / static_cast<double>(n);
                double* dl = d_lin.row_ptr(s);
                for (std::size_t i = 0; i < n; ++i) {
                    const double dhat = dy[i] * p.ln_gain[i];
                    dl[i] = is * (dhat - inv_n * sum_dhat - hat[i] * inv_n * sum_dhat_hat);
                }
                for (std::size_t i = 0; i < n; ++i) {
                    g.ln_gain[i] += dy[i] * hat[i];
                    g.ln_offset[i] += dy[i];
                }
            }
        } else {
            d_lin = std::move(d_act);
        }

        Matrix d_xp(lc.x_perm.rows(), ls.in_dim);
        if (ls.kind == LayerKind::dense) {
            g.dense = matmul_tn(d_lin, lc.x_perm);  // (out x B)(B x in)
            d_xp = matmul(d_lin, p.dense);          // (B x out)(out x in)
        } else {
            const auto& part = *ls.partition;
            for (std::size_t b = 0; b < part.k; ++b) {
                const auto members = part.block_members(b);
                const std::size_t bs = members.size();
                const Matrix& w = p.blocks[b];
                Matrix& gw = g.blocks[b];
                for (std::size_t s = 0; s < d_lin.rows(); ++s) {
                    const double* dl = d_lin.row_ptr(s);
                    const double* xrow = lc.x_perm.row_ptr(s);
                    double* dxrow = d_xp.row_ptr(s);
                    for (std::size_t i = 0; i < bs; ++i) {
                        const double di = dl[members[i]];
                        const double* wrow = w.row_ptr(i);
                        double* gwrow = gw.row_ptr(i);
                        for (std::size_t j = 0; j < bs; ++j) {
                            gwrow[j] += di * xrow[members[j]];
                            dxrow[members[j]] += di * wrow[j];
                        }
                    }
                }
            }
        }

        Matrix d_in;
        if (ls.input_perm) {
            // xp[:, i] = x[:, perm[i]]  =>  dL/dx[:, perm[i]] += dL/dxp[:, i]
            d_in = Matrix(d_xp.rows(), ls.in_dim);
            const auto& mapping = ls.input_perm->mapping;
            for (std::size_t s = 0; s < d_xp.rows(); ++s) {
                const double* src = d_xp.row_ptr(s);
                double* dst = d_in.row_ptr(s);
                for (std::size_t i = 0; i < ls.in_dim; ++i) dst[mapping[i]] += src[i];
            }
        } else {
            d_in = std::move(d_xp);
        }
        if (ls.residual) d_in += d_residual;

        grads.layers[l] = std::move(g);
        d_out = std::move(d_in);
    }

    if (spec.embedding) {
        const auto& e = *spec.embedding;
        EmbeddingParams eg;
        eg.naive = Matrix(e.vocab_size, e.d);
        eg.pitch = Matrix(e.pitch_card, e.d);
        eg.hand = Matrix(e.hand_card, e.d);
        std::vector<bool> tn(e.vocab_size, false), tp(e.pitch_card, false), th(e.hand_card, false);
        for (std::size_t b = 0; b < cache.tokens.size(); ++b) {
            const std::int32_t t = cache.tokens[b];
            const double* dg = d_out.row_ptr(b);
            bool nonzero = false;
            for (std::size_t i = 0; i < e.d; ++i) {
                if (dg[i] != 0.0) {
                    nonzero = true;
                    break;
                }
            }
            if (!nonzero) continue;
            if (e.mode == EmbeddingMode::naive) {
                double* row = eg.naive.row_ptr(t);
                for (std::size_t i = 0; i < e.d; ++i) row[i] += dg[i];
                tn[t] = true;
            } else {
                double* pr = eg.pitch.row_ptr(e.pitch_map[t]);
                double* hr = eg.hand.row_ptr(e.hand_map[t]);
                for (std::size_t i = 0; i < e.d; ++i) {
                    pr[i] += dg[i];
                    hr[i] += dg[i];
                }
                tp[e.pitch_map[t]] = true;
                th[e.hand_map[t]] = true;
            }
        }
        for (std::size_t r = 0; r < tn.size(); ++r)
            if (tn[r]) grads.touched_naive.push_back(static_cast<std::uint32_t>(r));
        for (std::size_t r = 0; r < tp.size(); ++r)
            if (tp[r]) grads.touched_pitch.push_back(static_cast<std::uint32_t>(r));
        for (std::size_t r = 0; r < th.size(); ++r)
            if (th[r]) grads.touched_hand.push_back(static_cast<std::uint32_t>(r));
        grads.embedding = std::move(eg);
    }
    grads.input_grad = std::move(d_out);
    return grads;
}

// Expands the layer's linear factor (permutation included) applied to an
// accumulated Jacobian: returns J_layer_linear * j.
static Matrix push_linear(const LayerSpec& ls, const LayerParams& p, const Matrix& j) {
    Matrix jp = ls.input_perm ? permute_rows(j, *ls.input_perm) : j;
    if (ls.kind == LayerKind::dense) return matmul(p.dense, jp);
    const auto& part = *ls.partition;
    Matrix out(ls.out_dim, jp.cols());
    for (std::size_t b = 0; b < part.k; ++b) {
        const auto members = part.block_members(b);
        const std::size_t bs = members.size();
        const Matrix& w = p.blocks[b];
        for (std::size_t i = 0; i < bs; ++i) {
            const double* wrow = w.row_ptr(i);
            double* orow = out.row_ptr(members[i]);
            for (std::size_t c = 0; c < jp.cols(); ++c) {
                double acc = 0.0;
                for (std::size_t t = 0; t < bs; ++t) acc += wrow[t] * jp(members[t], c);
                orow[c] = acc;
            }
        }
    }
    return out;
}

// Per-layer Jacobian factors evaluated on a forward cache from a single probe
// row. Returns J for each layer (out_dim x in_dim), residual included.
static std::vector<Matrix> layer_jacobians(const NetworkState& state, const NetworkSpec& spec,
                                           const ForwardCache& cache) {
    std::vector<Matrix> jacobians;
    jacobians.reserve(spec.layers.size());
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& ls = spec.layers[l];
        const auto& p = state.layers[l];
        const auto& lc = cache.layers[l];
        // Start from the identity on the layer input and push through each
        // stage; the result is the layer's Jacobian at the probe.
        Matrix j = push_linear(ls, p, Matrix::identity(ls.in_dim));
        if (ls.layernorm) {
            const std::size_t n = ls.out_dim;
            const double is = lc.ln_invstd[0];
            const double inv_n = 1.0 / static_cast<double>(n);
            Matrix ln_j(n, n);
            for (std::size_t i = 0; i < n; ++i) {
                const double gi = p.ln_gain[i] * is;
                for (std::size_t t = 0; t < n; ++t) {
                    double v = (i == t ? 1.0 : 0.0) - inv_n - lc.ln_hat(0, i) * lc.ln_hat(0, t) * inv_n;
                    ln_j(i, t) = gi * v;
                }
            }
            j = matmul(ln_j, j);
        }
        if (ls.activation == Activation::relu) {
            // Gates frozen at the probe; pre-activation exactly 0 counts as
            // active.
            for (std::size_t i = 0; i < ls.out_dim; ++i) {
                if (lc.pre_act(0, i) < 0.0) {
                    for (std::size_t c = 0; c < j.cols(); ++c) j(i, c) = 0.0;
                }
            }
        }
        if (ls.residual) j += Matrix::identity(ls.in_dim);
        jacobians.push_back(std::move(j));
    }
    return jacobians;
}

Matrix end_to_end_linear_map(const NetworkState& state, const NetworkSpec& spec,
                             const std::vector<double>* probe, std::size_t upto_layer) {
    spec.validate();
    std::vector<double> zero(spec.input_dim, 0.0);
    const std::vector<double>& x0 = probe ? *probe : zero;
    if (x0.size() != spec.input_dim) {
        throw std::invalid_argument("end_to_end_linear_map: probe length mismatch");
    }
    Matrix xrow(1, spec.input_dim);
    std::copy(x0.begin(), x0.end(), xrow.row_ptr(0));
    ForwardCache cache;
    forward(state, spec, xrow, &cache);
    const auto jacobians = layer_jacobians(state, spec, cache);

    const std::size_t last = std::min(upto_layer, spec.layers.size() - 1);
    Matrix total = Matrix::identity(spec.input_dim);
    for (std::size_t l = 0; l <= last && l < jacobians.size(); ++l) {
        total = matmul(jacobians[l], total);
    }
    return total;
}

FaultReport fault_localize(const NetworkState& state, const NetworkSpec& spec,
                           const std::vector<double>& error_vec, const BlockPartition& p,
                           const std::vector<double>* probe) {
    spec.validate();
    if (error_vec.size() != spec.output_dim()) {
        throw std::invalid_argument("fault_localize: error vector length != output dim");
    }
    std::vector<std::size_t> matching;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& ls = spec.layers[l];
        if (ls.kind == LayerKind::block_diagonal && ls.partition && *ls.partition == p) {
            matching.push_back(l);
        }
    }
    if (matching.empty()) {
        throw std::invalid_argument("fault_localize: no block layer uses the given partition");
    }

    std::vector<double> zero(spec.input_dim, 0.0);
    const std::vector<double>& x0 = probe ? *probe : zero;
    Matrix xrow(1, spec.input_dim);
    std::copy(x0.begin(), x0.end(), xrow.row_ptr(0));
    ForwardCache cache;
    forward(state, spec, xrow, &cache);
    const auto jacobians = layer_jacobians(state, spec, cache);

    // Downstream maps: suffix[l] = J_{L-1} ... J_{l+1} (layer l output ->
    // network output).
    const std::size_t L = spec.layers.size();
    std::vector<Matrix> suffix(L);
    suffix[L - 1] = Matrix::identity(spec.output_dim());
    for (std::size_t l = L - 1; l-- > 0;) {
        suffix[l] = matmul(suffix[l + 1], jacobians[l + 1]);
    }

    FaultReport rep;
    rep.scores.assign(p.k, 0.0);
    rep.degenerate.assign(p.k, false);
    const std::size_t out_dim = spec.output_dim();
    for (std::size_t b = 0; b < p.k; ++b) {
        const auto members = p.block_members(b);
        Matrix basis(out_dim, matching.size() * members.size());
        std::size_t col = 0;
        for (std::size_t l : matching) {
            for (std::uint32_t m : members) {
                for (std::size_t r = 0; r < out_dim; ++r) basis(r, col) = suffix[l](r, m);
                ++col;
            }
        }
        Matrix q = orthonormal_columns(basis);
        if (q.cols() == 0) {
            rep.degenerate[b] = true;
            continue;
        }
        double norm2 = 0.0;
        for (std::size_t c = 0; c < q.cols(); ++c) {
            double dot = 0.0;
            for (std::size_t r = 0; r < out_dim; ++r) dot += q(r, c) * error_vec[r];
            norm2 += dot * dot;
        }
        rep.scores[b] = std::sqrt(norm2);
    }
    rep.argmax = static_cast<std::size_t>(
        std::max_element(rep.scores.begin(), rep.scores.end()) - rep.scores.begin());
    return rep;
}

// --- JSON checkpoint ---------------------------------------------------

static nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

static Matrix matrix_from_json(const nlohmann::json& j) {
    return Matrix::from_data(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                             j.at("data").get<std::vector<double>>());
}

std::string NetworkState::to_json() const {
    nlohmann::json layers_json = nlohmann::json::array();
    for (const auto& p : layers) {
        nlohmann::json lj;
        if (!p.dense.empty()) lj["dense"] = matrix_to_json(p.dense);
        if (!p.blocks.empty()) {
            nlohmann::json blocks = nlohmann::json::array();
            for (const auto& b : p.blocks) blocks.push_back(matrix_to_json(b));
            lj["blocks"] = std::move(blocks);
        }
        if (!p.ln_gain.empty()) {
            lj["ln_gain"] = p.ln_gain;
            lj["ln_offset"] = p.ln_offset;
        }
        layers_json.push_back(std::move(lj));
    }
    nlohmann::json j{{"revision", revision}, {"layers", std::move(layers_json)}};
    if (embedding) {
        j["embedding"] = {{"naive", matrix_to_json(embedding->naive)},
                          {"pitch", matrix_to_json(embedding->pitch)},
                          {"hand", matrix_to_json(embedding->hand)}};
    }
    return j.dump();
}

NetworkState NetworkState::parse_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    NetworkState s;
    s.revision = j.at("revision").get<std::uint64_t>();
    for (const auto& lj : j.at("layers")) {
        LayerParams p;
        if (lj.contains("dense")) p.dense = matrix_from_json(lj.at("dense"));
        if (lj.contains("blocks")) {
            for (const auto& bj : lj.at("blocks")) p.blocks.push_back(matrix_from_json(bj));
        }
        if (lj.contains("ln_gain")) {
            p.ln_gain = lj.at("ln_gain").get<std::vector<double>>();
            p.ln_offset = lj.at("ln_offset").get<std::vector<double>>();
        }
        s.layers.push_back(std::move(p));
    }
    if (j.contains("embedding")) {
        EmbeddingParams e;
        e.naive = matrix_from_json(j.at("embedding").at("naive"));
        e.pitch = matrix_from_json(j.at("embedding").at("pitch"));
        e.hand = matrix_from_json(j.at("embedding").at("hand"));
        s.embedding = std::move(e);
    }
    return s;
}

void NetworkState::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("NetworkState::save: cannot open " + path);
    }
    out << to_json();
}

NetworkState NetworkState::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("NetworkState::load: cannot open " + path);
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_json(text);
}

}  // namespace blocklab
