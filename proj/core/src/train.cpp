#include "blocklab/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace blocklab {

void TrainConfig::validate() const {
    // lr = 0 is allowed as an evaluate-at-initialization run.
    if (lr < 0.0) throw std::invalid_argument("TrainConfig: lr must be >= 0");
    if (early_stop_patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
    if (loss.gamma < 0.0) throw std::invalid_argument("TrainConfig: focal gamma must be >= 0");
    if (!(loss.alpha > 0.0 && loss.alpha <= 1.0)) {
        throw std::invalid_argument("TrainConfig: focal alpha must be in (0, 1]");
    }
    if (batch == 0) throw std::invalid_argument("TrainConfig: batch must be >= 1");
    if (eval_every == 0) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
}

void TrainHistory::write_csv(std::ostream& out) const {
    out << "step,train_loss,val_loss\n";
    for (const auto& r : records) {
        out << r.step << ',' << r.train_loss << ',' << r.val_loss << '\n';
    }
}

std::string TrainHistory::to_csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
}

LossValue mse_loss(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw std::invalid_argument("mse_loss: shape mismatch");
    }
    LossValue lv;
    lv.grad = Matrix(pred.rows(), pred.cols());
    const double inv_count = 1.0 / static_cast<double>(pred.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data()[i] - target.data()[i];
        sum += d * d;
        lv.grad.data()[i] = 2.0 * d * inv_count;
    }
    lv.value = sum * inv_count;
    return lv;
}

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (std::size_t s = 0; s < logits.rows(); ++s) {
        const double* z = logits.row_ptr(s);
        double* row = p.row_ptr(s);
        double zmax = z[0];
        for (std::size_t i = 1; i < logits.cols(); ++i) zmax = std::max(zmax, z[i]);
        double denom = 0.0;
        for (std::size_t i = 0; i < logits.cols(); ++i) {
            row[i] = std::exp(z[i] - zmax);
            denom += row[i];
        }
        for (std::size_t i = 0; i < logits.cols(); ++i) row[i] /= denom;
    }
    return p;
}

LossValue focal_loss(const Matrix& probs, const std::vector<std::int32_t>& targets,
                     double alpha, double gamma) {
    if (probs.rows() != targets.size()) {
        throw std::invalid_argument("focal_loss: batch size mismatch");
    }
    for (std::size_t s = 0; s < probs.rows(); ++s) {
        double sum = 0.0;
        for (std::size_t i = 0; i < probs.cols(); ++i) {
            if (probs(s, i) < 0.0) throw std::invalid_argument("focal_loss: negative probability");
            sum += probs(s, i);
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw std::invalid_argument("focal_loss: row " + std::to_string(s) +
                                        " is not a distribution");
        }
    }
    LossValue lv;
    lv.grad = Matrix(probs.rows(), probs.cols());
    const double inv_b = 1.0 / static_cast<double>(probs.rows());
    for (std::size_t s = 0; s < probs.rows(); ++s) {
        const std::int32_t t = targets[s];
        if (t < 0 || static_cast<std::size_t>(t) >= probs.cols()) {
            throw std::out_of_range("focal_loss: target class out of range");
        }
        double pt = probs(s, t);
        if (pt <= 0.0) {
            pt = 1e-12;
            lv.clamped = true;
        }
        if (pt >= 1.0 - 1e-15) {
            // Fully confident and correct: zero loss, zero gradient.
            continue;
        }
        const double one_minus = 1.0 - pt;
        lv.value += -alpha * std::pow(one_minus, gamma) * std::log(pt) * inv_b;
        // dFL/dp_t, then chain through softmax: dp_t/dz_i = p_t (delta - p_i).
        const double dfl_dpt =
            alpha * (gamma * std::pow(one_minus, gamma - 1.0) * std::log(pt) -
                     std::pow(one_minus, gamma) / pt);
        for (std::size_t i = 0; i < probs.cols(); ++i) {
            const double delta = (static_cast<std::int32_t>(i) == t) ? 1.0 : 0.0;
            lv.grad(s, i) += dfl_dpt * pt * (delta - probs(s, i)) * inv_b;
        }
    }
    return lv;
}

LossValue softmax_cross_entropy(const Matrix& logits, const std::vector<std::int32_t>& targets) {
    if (logits.rows() != targets.size()) {
        throw std::invalid_argument("softmax_cross_entropy: batch size mismatch");
    }
    const Matrix p = softmax(logits);
    LossValue lv;
    lv.grad = Matrix(logits.rows(), logits.cols());
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    for (std::size_t s = 0; s < logits.rows(); ++s) {
        const std::int32_t t = targets[s];
        if (t < 0 || static_cast<std::size_t>(t) >= logits.cols()) {
            throw std::out_of_range("softmax_cross_entropy: target class out of range");
        }
        lv.value += -std::log(std::max(p(s, t), 1e-300)) * inv_b;
        for (std::size_t i = 0; i < logits.cols(); ++i) {
            lv.grad(s, i) = (p(s, i) - ((static_cast<std::int32_t>(i) == t) ? 1.0 : 0.0)) * inv_b;
        }
    }
    return lv;
}

OptimizerState make_optimizer_state(const NetworkSpec& spec, const NetworkState& state) {
    OptimizerState os;
    os.m.reserve(state.layers.size());
    os.v.reserve(state.layers.size());
    for (std::size_t l = 0; l < state.layers.size(); ++l) {
        const auto& p = state.layers[l];
        LayerParams zm;
        if (!p.dense.empty()) zm.dense = Matrix(p.dense.rows(), p.dense.cols());
        for (const auto& b : p.blocks) zm.blocks.emplace_back(b.rows(), b.cols());
        if (!p.ln_gain.empty()) {
            zm.ln_gain.assign(p.ln_gain.size(), 0.0);
            zm.ln_offset.assign(p.ln_offset.size(), 0.0);
        }
        os.m.push_back(zm);
        os.v.push_back(std::move(zm));
    }
    if (spec.embedding && state.embedding) {
        EmbeddingParams z;
        z.naive = Matrix(state.embedding->naive.rows(), state.embedding->naive.cols());
        z.pitch = Matrix(state.embedding->pitch.rows(), state.embedding->pitch.cols());
        z.hand = Matrix(state.embedding->hand.rows(), state.embedding->hand.cols());
        os.em = z;
        os.ev = std::move(z);
    }
    return os;
}

namespace {

void check_finite(const std::vector<double>& g, const std::string& where) {
    for (double v : g) {
        if (!std::isfinite(v)) throw NonFiniteGradError(where);
    }
}

void adam_update(std::vector<double>& w, std::vector<double>& m, std::vector<double>& v,
                 const std::vector<double>& g, double lr, const OptimizerConfig& oc,
                 double bc1, double bc2, const std::string& where) {
    check_finite(g, where);
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = oc.beta1 * m[i] + (1.0 - oc.beta1) * g[i];
        v[i] = oc.beta2 * v[i] + (1.0 - oc.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + oc.eps);
    }
}

void sgd_update(std::vector<double>& w, const std::vector<double>& g, double lr,
                const std::string& where) {
    check_finite(g, where);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
}

}  // namespace

void adam_step(NetworkState& state, OptimizerState& opt, const NetworkGrads& grads,
               const TrainConfig& config, std::size_t t) {
    const auto& oc = config.optimizer;
    const double bc1 = 1.0 - std::pow(oc.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(oc.beta2, static_cast<double>(t));
    for (std::size_t l = 0; l < state.layers.size(); ++l) {
        auto& p = state.layers[l];
        auto& gm = opt.m[l];
        auto& gv = opt.v[l];
        const auto& g = grads.layers[l];
        const std::string where = "layer " + std::to_string(l);
        if (!p.dense.empty()) {
            adam_update(p.dense.data(), gm.dense.data(), gv.dense.data(), g.dense.data(),
                        config.lr, oc, bc1, bc2, where);
        }
        for (std::size_t b = 0; b < p.blocks.size(); ++b) {
            adam_update(p.blocks[b].data(), gm.blocks[b].data(), gv.blocks[b].data(),
                        g.blocks[b].data(), config.lr, oc, bc1, bc2,
                        where + " block " + std::to_string(b));
        }
        if (!p.ln_gain.empty()) {
            adam_update(p.ln_gain, gm.ln_gain, gv.ln_gain, g.ln_gain, config.lr, oc, bc1, bc2,
                        where + " ln_gain");
            adam_update(p.ln_offset, gm.ln_offset, gv.ln_offset, g.ln_offset, config.lr, oc,
                        bc1, bc2, where + " ln_offset");
        }
    }
    if (state.embedding && grads.embedding) {
        adam_update(state.embedding->naive.data(), opt.em->naive.data(), opt.ev->naive.data(),
                    grads.embedding->naive.data(), config.lr, oc, bc1, bc2, "embedding naive");
        adam_update(state.embedding->pitch.data(), opt.em->pitch.data(), opt.ev->pitch.data(),
                    grads.embedding->pitch.data(), config.lr, oc, bc1, bc2, "embedding pitch");
        adam_update(state.embedding->hand.data(), opt.em->hand.data(), opt.ev->hand.data(),
                    grads.embedding->hand.data(), config.lr, oc, bc1, bc2, "embedding hand");
    }
    ++state.revision;
}

void sgd_step(NetworkState& state, const NetworkGrads& grads, const TrainConfig& config) {
    for (std::size_t l = 0; l < state.layers.size(); ++l) {
        auto& p = state.layers[l];
        const auto& g = grads.layers[l];
        const std::string where = "layer " + std::to_string(l);
        if (!p.dense.empty()) sgd_update(p.dense.data(), g.dense.data(), config.lr, where);
        for (std::size_t b = 0; b < p.blocks.size(); ++b) {
            sgd_update(p.blocks[b].data(), g.blocks[b].data(), config.lr,
                       where + " block " + std::to_string(b));
        }
        if (!p.ln_gain.empty()) {
            sgd_update(p.ln_gain, g.ln_gain, config.lr, where + " ln_gain");
            sgd_update(p.ln_offset, g.ln_offset, config.lr, where + " ln_offset");
        }
    }
    if (state.embedding && grads.embedding) {
        sgd_update(state.embedding->naive.data(), grads.embedding->naive.data(), config.lr,
                   "embedding naive");
        sgd_update(state.embedding->pitch.data(), grads.embedding->pitch.data(), config.lr,
                   "embedding pitch");
        sgd_update(state.embedding->hand.data(), grads.embedding->hand.data(), config.lr,
                   "embedding hand");
    }
    ++state.revision;
}

UpdateFrequencyReport update_frequency(const UpdateCounter& counter) {
    if (counter.steps == 0) {
        throw std::invalid_argument("update_frequency: zero steps recorded");
    }
    UpdateFrequencyReport rep;
    const double inv = 1.0 / static_cast<double>(counter.steps);
    const auto conv = [&](const std::vector<std::uint64_t>& c) {
        std::vector<double> f(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) f[i] = static_cast<double>(c[i]) * inv;
        return f;
    };
    rep.naive_freq = conv(counter.naive_rows);
    rep.pitch_freq = conv(counter.pitch_rows);
    rep.hand_freq = conv(counter.hand_rows);
    return rep;
}

namespace {

struct EvalOutcome {
    double loss;
};

EvalOutcome evaluate_batch(const NetworkState& state, const NetworkSpec& spec,
                           const TaskBatch& batch, const LossConfig& loss,
                           ForwardCache* cache, LossValue* out_lv) {
    Matrix pred = batch.tokens.empty() ? forward(state, spec, batch.x, cache)
                                       : forward_tokens(state, spec, batch.tokens, cache);
    LossValue lv;
    switch (loss.kind) {
        case LossKind::mse:
            lv = mse_loss(pred, batch.y);
            break;
        case LossKind::focal:
            lv = focal_loss(softmax(pred), batch.classes, loss.alpha, loss.gamma);
            break;
        case LossKind::cross_entropy:
            lv = softmax_cross_entropy(pred, batch.classes);
            break;
    }
    const double value = lv.value;
    if (out_lv) *out_lv = std::move(lv);
    return {value};
}

double validation_loss(const NetworkState& state, const NetworkSpec& spec,
                       const TaskSource& task, const TrainConfig& config) {
    double total = 0.0;
    for (std::size_t i = 0; i < task.val_batches; ++i) {
        const TaskBatch b = task.next(Split::val, i, config.batch);
        total += evaluate_batch(state, spec, b, config.loss, nullptr, nullptr).loss;
    }
    return total / static_cast<double>(task.val_batches);
}

}  // namespace

TrainResult train(const NetworkSpec& spec, const TaskSource& task, const TrainConfig& config) {
    config.validate();
    spec.validate();

    SeededRng init_rng(config.seed, 0x1417);
    NetworkState state = init_he(spec, init_rng);
    OptimizerState opt = make_optimizer_state(spec, state);

    TrainResult result;
    if (spec.embedding) {
        result.counter.naive_rows.assign(spec.embedding->vocab_size, 0);
        result.counter.pitch_rows.assign(spec.embedding->pitch_card, 0);
        result.counter.hand_rows.assign(spec.embedding->hand_card, 0);
    }

    double best_val = std::numeric_limits<double>::infinity();
    std::size_t evals_since_best = 0;
    double last_train_loss = 0.0;
    bool have_train_loss = false;

    const auto record_eval = [&](std::size_t step) -> bool {
        const double val = validation_loss(state, spec, task, config);
        const double train_loss = have_train_loss ? last_train_loss : val;
        result.history.records.push_back({step, train_loss, val});
        if (!std::isfinite(val)) {
            result.history.diverged = true;
            return false;
        }
        if (val < best_val) {
            best_val = val;
            result.best_state = state;
            evals_since_best = 0;
        } else {
            ++evals_since_best;
        }
        return evals_since_best < config.early_stop_patience;
    };

    record_eval(0);
    std::size_t step = 0;
    if (!result.history.diverged && evals_since_best < config.early_stop_patience) {
        for (step = 1; step <= config.steps; ++step) {
            const TaskBatch batch = task.next(Split::train, step - 1, config.batch);
            ForwardCache cache;
            LossValue lv;
            evaluate_batch(state, spec, batch, config.loss, &cache, &lv);
            last_train_loss = lv.value;
            have_train_loss = true;
            if (!std::isfinite(lv.value)) {
                result.history.diverged = true;
                break;
            }
            NetworkGrads grads = backward(state, spec, cache, lv.grad);
            if (spec.embedding) {
                for (auto r : grads.touched_naive) ++result.counter.naive_rows[r];
                for (auto r : grads.touched_pitch) ++result.counter.pitch_rows[r];
                for (auto r : grads.touched_hand) ++result.counter.hand_rows[r];
                ++result.counter.steps;
            }
            try {
                if (config.optimizer.kind == OptimizerKind::adam) {
                    adam_step(state, opt, grads, config, opt.t + 1);
                    ++opt.t;
                } else {
                    sgd_step(state, grads, config);
                }
            } catch (const NonFiniteGradError&) {
                result.history.diverged = true;
                break;
            }
            if (step % config.eval_every == 0) {
                if (!record_eval(step)) break;
            }
        }
    }
    result.history.stopped_at = std::min(step, config.steps);
    result.history.best_val = best_val;
    if (!std::isfinite(best_val)) {
        // Never had a finite evaluation; hand back the initial state.
        result.best_state = state;
        result.history.best_val = result.history.records.empty()
                                      ? std::numeric_limits<double>::quiet_NaN()
                                      : result.history.records.front().val_loss;
    }
    return result;
}

}  // namespace blocklab
