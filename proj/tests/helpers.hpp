#pragma once

// Shared generators for randomized model checks. Everything is seeded, so
// failures reproduce.

#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "thintime/thin_time.hpp"
#include "thintime/tree.hpp"

namespace thintime::testing {

using Rng = std::mt19937_64;

inline TreeModel random_tree(Rng& rng, int max_depth = 8, int max_branch = 3) {
    std::uniform_int_distribution<int> depth_dist(1, max_depth);
    const int depth = depth_dist(rng);
    std::vector<LevelBranching> spec;
    std::size_t width = 1;
    for (int t = 0; t < depth; ++t) {
        std::uniform_int_distribution<int> branch_dist(2, max_branch);
        LevelBranching level;
        for (std::size_t j = 0; j < width; ++j) {
            const int b = branch_dist(rng);
            std::vector<double> probs(static_cast<std::size_t>(b));
            double sum = 0.0;
            std::uniform_real_distribution<double> u(0.1, 1.0);
            for (double& p : probs) {
                p = u(rng);
                sum += p;
            }
            for (double& p : probs) p /= sum;
            // renormalize exactly so validation tolerances are never the issue
            double s2 = 0.0;
            for (std::size_t i = 0; i + 1 < probs.size(); ++i) s2 += probs[i];
            probs.back() = 1.0 - s2;
            level.push_back(probs);
        }
        spec.push_back(level);
        width = 0;
        for (const auto& probs : level) width += probs.size();
        if (width > 2048) {  // keep randomized models small
            break;
        }
    }
    return build_tree(spec);
}

inline RandomVariable random_leaf_variable(Rng& rng, const TreeModel& tree, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    RandomVariable x;
    x.values.resize(tree.n_leaves());
    for (double& v : x.values) v = u(rng);
    return x;
}

// Random exhausting sequence built from hitting times of disjoint adapted
// node sets; graphs are disjoint by construction.
inline ExhaustingSequence random_exhausting(Rng& rng, const TreeModel& tree, int n_entries) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> which(0, n_entries - 1);
    // label[t][node] in {-1, 0..n_entries-1}
    std::vector<std::vector<int>> label(static_cast<std::size_t>(tree.depth()) + 1);
    for (int t = 0; t <= tree.depth(); ++t) {
        label[static_cast<std::size_t>(t)].assign(tree.n_nodes(t), -1);
        for (std::size_t j = 0; j < tree.n_nodes(t); ++j)
            if (u(rng) < 0.35) label[static_cast<std::size_t>(t)][j] = which(rng);
    }
    ExhaustingSequence seq;
    seq.times.resize(static_cast<std::size_t>(n_entries));
    for (auto& T : seq.times) T.time.assign(tree.n_leaves(), kTimeInf);
    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
        std::vector<bool> hit(static_cast<std::size_t>(n_entries), false);
        for (int t = 0; t <= tree.depth(); ++t) {
            const int g = label[static_cast<std::size_t>(t)][tree.node_of(leaf, t)];
            if (g >= 0 && !hit[static_cast<std::size_t>(g)]) {
                hit[static_cast<std::size_t>(g)] = true;
                seq.times[static_cast<std::size_t>(g)].time[leaf] = t;
            }
        }
    }
    return seq;
}

struct RandomThinTimeOptions {
    int n_entries = 2;
    int n_marks = 2;
    double p_assign = 0.6;        // chance a leaf with a finite entry takes tau there
    bool measurable_cells = false;  // force C_n^k in F_{T_n}
};

inline ThinTimeModel random_thin_time(Rng& rng, const TreeModel& tree, const RandomThinTimeOptions& opt = {}) {
    const ExhaustingSequence seq = random_exhausting(rng, tree, opt.n_entries);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> mark_dist(0, opt.n_marks - 1);
    CellAssignment assignment;
    assignment.entry.assign(tree.n_leaves(), 0);
    assignment.mark.assign(tree.n_leaves(), -1);

    if (!opt.measurable_cells) {
        for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
            std::vector<int> finite;
            for (std::size_t n = 0; n < seq.times.size(); ++n)
                if (seq.times[n].time[leaf] != kTimeInf) finite.push_back(static_cast<int>(n) + 1);
            if (finite.empty() || u(rng) > opt.p_assign) continue;
            assignment.entry[leaf] = finite[static_cast<std::size_t>(u(rng) * finite.size()) % finite.size()];
            assignment.mark[leaf] = mark_dist(rng);
        }
    } else {
        // Decide per (entry, {T_n = s} node): the whole span goes to one cell
        // or stays unassigned, with earlier times taking precedence.
        for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) assignment.entry[leaf] = 0;
        for (int t = 0; t <= tree.depth(); ++t) {
            for (std::size_t j = 0; j < tree.n_nodes(t); ++j) {
                const TreeNode& nd = tree.node(t, j);
                for (std::size_t n = 0; n < seq.times.size(); ++n) {
                    if (seq.times[n].time[nd.leaf_begin] != t) continue;
                    // deterministic per-node draw
                    if (u(rng) < 0.7) {
                        const int mark = mark_dist(rng);
                        for (std::size_t leaf = nd.leaf_begin; leaf < nd.leaf_end; ++leaf) {
                            if (assignment.entry[leaf] != 0) continue;  // claimed at an earlier time
                            assignment.entry[leaf] = static_cast<int>(n) + 1;
                            assignment.mark[leaf] = mark;
                        }
                    }
                }
            }
        }
    }
    return build_thin_time(tree, seq, assignment);
}

// S1 fixture: depth-2 fair-coin tree, T_1 = 1, tau = 1 exactly when the
// second coin comes up heads (branch 0), one mark.
struct S1 {
    TreeModel tree;
    ThinTimeModel tt;
};

inline S1 make_s1() {
    S1 s;
    s.tree = build_uniform_tree(2, {0.5, 0.5});
    ExhaustingSequence seq;
    StoppingTimeMap t1;
    t1.time.assign(4, 1);
    seq.times.push_back(t1);
    CellAssignment assignment;
    assignment.entry = {1, 0, 1, 0};  // leaves HH, HT, TH, TT
    assignment.mark = {0, -1, 0, -1};
    s.tt = build_thin_time(s.tree, seq, assignment);
    return s;
}

}  // namespace thintime::testing
