#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blocklab/info.hpp"
#include "blocklab/topology.hpp"
#include "blocklab/train.hpp"

namespace blocklab {

enum class TaskKind { highrank_recovery, extreme_modular, factorized_manifold, joint_dist };

struct TaskSpec {
    TaskKind kind = TaskKind::highrank_recovery;
    std::size_t dim = 0;
    std::size_t groups = 1;
    double noise_sigma = 0.01;
    bool scramble = false;
    std::uint64_t seed = 0;
    std::size_t train_n = 10000;
    std::size_t val_n = 2048;

    void validate() const;
};

/// A generator instance: seeded batch source plus exported ground truth.
/// Batches are pure functions of (spec, split, batch index); train and val
/// use disjoint stream ids.
struct TaskData {
    TaskSource source;
    std::optional<BlockPartition> true_partition;      // observed-index groups
    std::optional<PermutationVec> hidden_permutation;  // when scrambled
    std::vector<std::size_t> latent_dims;              // factorized_manifold
    std::string law;  // generator law, stamped into result files
};

/// x ~ N(0, I); y = Q x + sigma * eps with Q a seeded random orthogonal map.
TaskData gen_highrank_recovery(const TaskSpec& spec);

/// Groups of equal size; within group g, x_i = sqrt(1/2) s_g + sqrt(1/2) e_i
/// (shared factor s_g gives every within-group pair correlation 1/2) and
/// y_g = A_g x_g + sigma * eps with A_g a seeded dense map scaled to spectral
/// norm 1. With scramble set, one hidden seeded permutation reorders both x
/// and y features; the ground-truth partition on observed indices is
/// exported.
TaskData gen_extreme_modular(const TaskSpec& spec);

/// Reconstruction source: x concatenates per-group signals x_g = E_g z,
/// z ~ N(0, I_latent), latent = group_size / 2, E_g seeded Gaussian with
/// entries N(0, 1/latent); target equals the input. noise_sigma adds white
/// noise to x (still target = input).
TaskData gen_factorized_manifold(const TaskSpec& spec);

TaskData make_task(const TaskSpec& spec);

/// Draws a sample table (n x dim) from the task's input distribution for
/// analysis (NMI estimation); uses a stream disjoint from train/val.
Matrix sample_inputs(const TaskSpec& spec, std::size_t n);

enum class JointKind { independent, coupled };

/// Seeded joint histogram fixture. Marginals are seeded random distributions
/// bounded away from zero; `coupled` mixes a diagonal pair (probability
/// `strength`) with an independent draw. independent == coupled(0) exactly.
JointHistogram gen_joint(JointKind kind, double strength, std::size_t card_x,
                         std::size_t card_y, std::size_t n, std::uint64_t seed);

}  // namespace blocklab
