#pragma once

// Thin random times with marks on the tree backend: exhausting sequences,
// partition cells C_n^k with their conditional-probability martingales
// z^{n,k}, the survival bundle (A, A°, Z, m) and the entropy functionals.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "thintime/errors.hpp"
#include "thintime/tree.hpp"

namespace thintime {

struct ExhaustingSequence {
    std::vector<StoppingTimeMap> times;
};

struct PartitionCell {
    int n = 0;  // 1-based index into the exhausting sequence
    int k = 0;  // mark value
    std::vector<std::uint8_t> indicator;
    double prob = 0.0;
    AdaptedProcess z;  // z^{n,k}_t = P(C_n^k | F_t)
};

// Leaf assignment: entry[leaf] = 1-based exhausting index (0 means tau = inf),
// mark[leaf] = mark value where assigned.
struct CellAssignment {
    std::vector<int> entry;
    std::vector<int> mark;
};

struct ThinTimeModel {
    ExhaustingSequence exhausting;
    StoppingTimeMap tau;            // leaf -> time, kTimeInf on the infinity cell
    std::vector<int> mark;          // leaf -> mark, -1 on the infinity cell
    std::vector<int> cell_of_leaf;  // leaf -> index into cells, -1 on the infinity cell
    std::vector<PartitionCell> cells;
    PartitionCell infinity_cell;    // C_0^0 = {tau = inf}; prob may be 0
    std::vector<std::string> warnings;
};

inline ThinTimeModel build_thin_time(const TreeModel& tree, const ExhaustingSequence& exhausting,
                                     const CellAssignment& assignment) {
    const std::size_t n_leaves = tree.n_leaves();
    if (assignment.entry.size() != n_leaves || assignment.mark.size() != n_leaves)
        fail(ErrorKind::ShapeMismatch, "cell assignment length mismatch");

    for (const auto& T : exhausting.times) validate_stopping_time(tree, T);
    for (std::size_t a = 0; a < exhausting.times.size(); ++a)
        for (std::size_t b = a + 1; b < exhausting.times.size(); ++b)
            for (std::size_t leaf = 0; leaf < n_leaves; ++leaf) {
                const int ta = exhausting.times[a].time[leaf];
                if (ta != kTimeInf && ta == exhausting.times[b].time[leaf])
                    fail(ErrorKind::OverlappingGraphs, "entries " + std::to_string(a + 1) + " and " +
                                                           std::to_string(b + 1) + " meet at leaf " +
                                                           std::to_string(leaf));
            }

    ThinTimeModel tt;
    tt.exhausting = exhausting;
    tt.tau.time.assign(n_leaves, kTimeInf);
    tt.mark.assign(n_leaves, -1);
    tt.cell_of_leaf.assign(n_leaves, -1);

    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (std::size_t leaf = 0; leaf < n_leaves; ++leaf) {
        const int n = assignment.entry[leaf];
        if (n == 0) continue;
        if (n < 1 || static_cast<std::size_t>(n) > exhausting.times.size())
            fail(ErrorKind::AssignmentOutsideGraph, "entry index " + std::to_string(n) + " out of range");
        const int t = exhausting.times[static_cast<std::size_t>(n) - 1].time[leaf];
        if (t == kTimeInf)
            fail(ErrorKind::AssignmentOutsideGraph,
                 "leaf " + std::to_string(leaf) + " assigned to entry " + std::to_string(n) + " where T_n = inf");
        tt.tau.time[leaf] = t;
        tt.mark[leaf] = assignment.mark[leaf];
        groups[{n, assignment.mark[leaf]}].push_back(leaf);
    }

    for (const auto& [nk, leaves] : groups) {
        PartitionCell cell;
        cell.n = nk.first;
        cell.k = nk.second;
        cell.indicator.assign(n_leaves, 0);
        RandomVariable ind;
        ind.values.assign(n_leaves, 0.0);
        for (std::size_t leaf : leaves) {
            cell.indicator[leaf] = 1;
            ind.values[leaf] = 1.0;
            cell.prob += tree.leaf_prob(leaf);
        }
        cell.z = martingale_closure(tree, ind);
        const int idx = static_cast<int>(tt.cells.size());
        for (std::size_t leaf : leaves) tt.cell_of_leaf[leaf] = idx;
        tt.cells.push_back(std::move(cell));
    }

    tt.infinity_cell.n = 0;
    tt.infinity_cell.k = 0;
    tt.infinity_cell.indicator.assign(n_leaves, 0);
    RandomVariable ind_inf;
    ind_inf.values.assign(n_leaves, 0.0);
    for (std::size_t leaf = 0; leaf < n_leaves; ++leaf)
        if (tt.tau.time[leaf] == kTimeInf) {
            tt.infinity_cell.indicator[leaf] = 1;
            ind_inf.values[leaf] = 1.0;
            tt.infinity_cell.prob += tree.leaf_prob(leaf);
        }
    tt.infinity_cell.z = martingale_closure(tree, ind_inf);
    return tt;
}

// Alternative entry point where tau and marks are given directly; verifies the
// graph-inclusion property [[tau]] subset of the union of [[T_n]].
inline ThinTimeModel build_thin_time_from_tau(const TreeModel& tree, const ExhaustingSequence& exhausting,
                                              const StoppingTimeMap& tau, const std::vector<int>& mark) {
    const std::size_t n_leaves = tree.n_leaves();
    require_leaf_shape(tree, tau.time.size(), "tau");
    CellAssignment assignment;
    assignment.entry.assign(n_leaves, 0);
    assignment.mark.assign(n_leaves, -1);
    for (std::size_t leaf = 0; leaf < n_leaves; ++leaf) {
        if (tau.time[leaf] == kTimeInf) continue;
        int hit = 0;
        for (std::size_t n = 0; n < exhausting.times.size(); ++n)
            if (exhausting.times[n].time[leaf] == tau.time[leaf]) {
                assignment.entry[leaf] = static_cast<int>(n) + 1;
                ++hit;
            }
        if (hit != 1)
            fail(ErrorKind::GraphInclusionViolated,
                 "tau at leaf " + std::to_string(leaf) + " matches " + std::to_string(hit) + " entries");
        assignment.mark[leaf] = mark[leaf];
    }
    return build_thin_time(tree, exhausting, assignment);
}

struct SurvivalBundle {
    RawProcess A;       // 1_{[[tau, inf[[}
    AdaptedProcess Ao;  // dual optional projection of A
    AdaptedProcess Z;   // P(tau > t | F_t)
    AdaptedProcess m;   // Ao + Z
    MartingaleReport m_check;
};

inline SurvivalBundle survival_bundle(const TreeModel& tree, const ThinTimeModel& tt) {
    SurvivalBundle sb;
    sb.A = RawProcess::zeros(tree.n_leaves(), tree.depth());
    RawProcess one_minus_A = RawProcess::zeros(tree.n_leaves(), tree.depth());
    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf)
        for (int t = 0; t <= tree.depth(); ++t) {
            const double a = tt.tau.time[leaf] <= t ? 1.0 : 0.0;
            sb.A(leaf, t) = a;
            one_minus_A(leaf, t) = 1.0 - a;
        }
    sb.Z = optional_projection(tree, one_minus_A);
    sb.Z.pre0 = 1.0;  // survival starts from certainty
    sb.Ao = dual_optional_projection(tree, sb.A);
    sb.m.at.resize(sb.Z.at.size());
    for (std::size_t t = 0; t < sb.Z.at.size(); ++t) {
        sb.m.at[t].resize(sb.Z.at[t].size());
        for (std::size_t j = 0; j < sb.Z.at[t].size(); ++j) sb.m.at[t][j] = sb.Ao.at[t][j] + sb.Z.at[t][j];
    }
    sb.m.pre0 = sb.m.at[0][0];
    sb.m_check = check_martingale(tree, sb.m);
    return sb;
}

struct EntropyCellTerm {
    int n = 0;
    int k = 0;
    double prob = 0.0;
    double term = 0.0;  // E[1_C (log 1/z_{T_n})^gamma]
};

struct EntropyReport {
    double gamma = 1.0;
    std::vector<EntropyCellTerm> per_cell;
    double total = 0.0;
    double partition_entropy = 0.0;  // H(C) = -sum P(C) log P(C), infinity cell included
    bool truncated = false;
    double tail_bound = 0.0;
    double standard_error = 0.0;  // 0 on the exact backend
};

inline EntropyReport entropy_gamma(const TreeModel& tree, const ThinTimeModel& tt, double gamma) {
    if (!(gamma > 0.0)) fail(ErrorKind::GammaNonPositive, "gamma = " + std::to_string(gamma));
    EntropyReport rep;
    rep.gamma = gamma;
    for (const PartitionCell& cell : tt.cells) {
        EntropyCellTerm term;
        term.n = cell.n;
        term.k = cell.k;
        term.prob = cell.prob;
        for (std::size_t leaf = 0; leaf < cell.indicator.size(); ++leaf) {
            if (!cell.indicator[leaf]) continue;
            const int tn = tt.tau.time[leaf];
            const double z = cell.z.at[static_cast<std::size_t>(tn)][tree.node_of(leaf, tn)];
            if (!(z > 0.0)) fail(ErrorKind::ZeroDenominator, "z vanished on its own cell");
            term.term += tree.leaf_prob(leaf) * std::pow(-std::log(z), gamma);
        }
        rep.total += term.term;
        rep.per_cell.push_back(term);
    }
    for (const PartitionCell& cell : tt.cells)
        if (cell.prob > 0.0) rep.partition_entropy -= cell.prob * std::log(cell.prob);
    if (tt.infinity_cell.prob > 0.0)
        rep.partition_entropy -= tt.infinity_cell.prob * std::log(tt.infinity_cell.prob);
    return rep;
}

// True when C is in F_{T_n}: within every {T_n = s} node span, C contains the
// whole span or misses it.
inline bool cell_measurable_at_tn(const TreeModel& tree, const ThinTimeModel& tt, const PartitionCell& cell) {
    const StoppingTimeMap& T = tt.exhausting.times[static_cast<std::size_t>(cell.n) - 1];
    for (int s = 0; s <= tree.depth(); ++s) {
        for (std::size_t j = 0; j < tree.n_nodes(s); ++j) {
            const TreeNode& nd = tree.node(s, j);
            if (T.time[nd.leaf_begin] != s) continue;
            const bool first = cell.indicator[nd.leaf_begin] != 0;
            for (std::size_t leaf = nd.leaf_begin + 1; leaf < nd.leaf_end; ++leaf)
                if ((cell.indicator[leaf] != 0) != first) return false;
        }
    }
    return true;
}

// Replace exhausting entry n by its restrictions to the splitter groups.
// group[leaf] >= 0 labels the group; the induced restrictions must themselves
// be stopping times and must cover {tau = T_n}.
inline ThinTimeModel split_exhausting_sequence(const TreeModel& tree, const ThinTimeModel& tt, int n,
                                               const std::vector<int>& group) {
    if (n < 1 || static_cast<std::size_t>(n) > tt.exhausting.times.size())
        fail(ErrorKind::InvalidSplit, "entry index " + std::to_string(n) + " out of range");
    require_leaf_shape(tree, group.size(), "splitter");
    const StoppingTimeMap& Tn = tt.exhausting.times[static_cast<std::size_t>(n) - 1];

    int n_groups = 0;
    for (int g : group) n_groups = std::max(n_groups, g + 1);
    if (n_groups < 1) fail(ErrorKind::InvalidSplit, "splitter has no groups");

    std::vector<StoppingTimeMap> parts(static_cast<std::size_t>(n_groups));
    std::vector<bool> nonempty(static_cast<std::size_t>(n_groups), false);
    for (auto& p : parts) p.time.assign(tree.n_leaves(), kTimeInf);
    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
        if (Tn.time[leaf] == kTimeInf) continue;
        const int g = group[leaf];
        if (g < 0) {
            if (tt.cell_of_leaf[leaf] >= 0 && tt.cells[static_cast<std::size_t>(tt.cell_of_leaf[leaf])].n == n)
                fail(ErrorKind::InvalidSplit, "splitter does not cover {tau = T_n}");
            continue;
        }
        parts[static_cast<std::size_t>(g)].time[leaf] = Tn.time[leaf];
        nonempty[static_cast<std::size_t>(g)] = true;
    }
    for (int g = 0; g < n_groups; ++g) {
        if (!nonempty[static_cast<std::size_t>(g)]) continue;
        try {
            validate_stopping_time(tree, parts[static_cast<std::size_t>(g)]);
        } catch (const Error& e) {
            fail(ErrorKind::InvalidSplit, std::string("group ") + std::to_string(g) +
                                              " is not a stopping time (" + e.what() + ")");
        }
    }

    // Rebuild the sequence: entries before/after n keep their order; the split
    // parts take the place of entry n.
    ExhaustingSequence seq;
    for (std::size_t i = 0; i < tt.exhausting.times.size(); ++i) {
        if (static_cast<int>(i) + 1 == n) {
            for (int g = 0; g < n_groups; ++g)
                if (nonempty[static_cast<std::size_t>(g)]) seq.times.push_back(parts[static_cast<std::size_t>(g)]);
        } else {
            seq.times.push_back(tt.exhausting.times[i]);
        }
    }

    int inserted = 0;
    for (bool b : nonempty) inserted += b ? 1 : 0;

    CellAssignment assignment;
    assignment.entry.assign(tree.n_leaves(), 0);
    assignment.mark.assign(tree.n_leaves(), -1);
    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
        const int c = tt.cell_of_leaf[leaf];
        if (c < 0) continue;
        const int old_n = tt.cells[static_cast<std::size_t>(c)].n;
        if (old_n == n) {
            int seen = 0;  // position of the leaf's group among the inserted parts
            for (int g = 0; g <= group[leaf]; ++g)
                if (nonempty[static_cast<std::size_t>(g)]) ++seen;
            assignment.entry[leaf] = n - 1 + seen;  // 1-based
        } else {
            assignment.entry[leaf] = old_n < n ? old_n : old_n + inserted - 1;
        }
        assignment.mark[leaf] = tt.mark[leaf];
    }
    return build_thin_time(tree, seq, assignment);
}

// Partition-of-unity residual: max over nodes of |sum_cells z + z_inf - 1|.
inline double partition_of_unity_residual(const TreeModel& tree, const ThinTimeModel& tt) {
    double worst = 0.0;
    for (int t = 0; t <= tree.depth(); ++t)
        for (std::size_t j = 0; j < tree.n_nodes(t); ++j) {
            double s = tt.infinity_cell.z.at[static_cast<std::size_t>(t)][j];
            for (const PartitionCell& cell : tt.cells) s += cell.z.at[static_cast<std::size_t>(t)][j];
            worst = std::max(worst, std::abs(s - 1.0));
        }
    return worst;
}

}  // namespace thintime
