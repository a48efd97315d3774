#pragma once

// Progressive enlargement on the tree backend. G_t refines the time-t tree
// atoms with the observation available to the insider at t: "tau not yet",
// or the pair (tau, mark) once tau <= t. All conditional expectations under G
// are finite sums over atoms, so the key lemma and the canonical
// decomposition can be checked without statistical error.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "thintime/errors.hpp"
#include "thintime/thin_time.hpp"
#include "thintime/tree.hpp"

namespace thintime {

struct EnlargedFiltration {
    // atom_of[t][leaf] -> atom id at time t; atoms are numbered contiguously.
    std::vector<std::vector<int>> atom_of;
    std::vector<std::vector<double>> atom_prob;
};

inline EnlargedFiltration enlarge(const TreeModel& tree, const ThinTimeModel& tt) {
    EnlargedFiltration gf;
    const int depth = tree.depth();
    gf.atom_of.resize(static_cast<std::size_t>(depth) + 1);
    gf.atom_prob.resize(static_cast<std::size_t>(depth) + 1);
    for (int t = 0; t <= depth; ++t) {
        auto& ids = gf.atom_of[static_cast<std::size_t>(t)];
        ids.assign(tree.n_leaves(), -1);
        std::map<std::tuple<std::size_t, int, int>, int> key_to_atom;
        for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
            const bool occurred = tt.tau.time[leaf] <= t;
            const std::tuple<std::size_t, int, int> key{tree.node_of(leaf, t), occurred ? tt.tau.time[leaf] : -1,
                                                        occurred ? tt.mark[leaf] : -1};
            auto [it, inserted] = key_to_atom.try_emplace(key, static_cast<int>(key_to_atom.size()));
            ids[leaf] = it->second;
            if (inserted) gf.atom_prob[static_cast<std::size_t>(t)].push_back(0.0);
            gf.atom_prob[static_cast<std::size_t>(t)][static_cast<std::size_t>(it->second)] += tree.leaf_prob(leaf);
        }
    }
    return gf;
}

inline std::size_t n_atoms(const EnlargedFiltration& gf, int t) { return gf.atom_prob[static_cast<std::size_t>(t)].size(); }

// E[x | G_t] as a leaf-indexed vector (constant on atoms).
inline std::vector<double> g_conditional_expectation(const TreeModel& tree, const EnlargedFiltration& gf,
                                                     const RandomVariable& x, int t) {
    require_leaf_shape(tree, x.values.size(), "g_conditional_expectation");
    const auto& ids = gf.atom_of[static_cast<std::size_t>(t)];
    std::vector<double> num(n_atoms(gf, t), 0.0);
    for (std::size_t leaf = 0; leaf < x.values.size(); ++leaf)
        num[static_cast<std::size_t>(ids[leaf])] += tree.leaf_prob(leaf) * x.values[leaf];
    std::vector<double> out(x.values.size());
    for (std::size_t leaf = 0; leaf < x.values.size(); ++leaf) {
        const std::size_t a = static_cast<std::size_t>(ids[leaf]);
        out[leaf] = num[a] / gf.atom_prob[static_cast<std::size_t>(t)][a];
    }
    return out;
}

// Max over atoms and times of |E[p_{t+1}|G_t] - p_t|; p is (leaf, time) indexed.
inline double g_martingale_residual(const TreeModel& tree, const EnlargedFiltration& gf, const RawProcess& p) {
    require_raw_shape(tree, p, "g_martingale_residual");
    double worst = 0.0;
    for (int t = 0; t < tree.depth(); ++t) {
        const auto& ids = gf.atom_of[static_cast<std::size_t>(t)];
        std::vector<double> num(n_atoms(gf, t), 0.0);
        for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf)
            num[static_cast<std::size_t>(ids[leaf])] += tree.leaf_prob(leaf) * p(leaf, t + 1);
        for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
            const std::size_t a = static_cast<std::size_t>(ids[leaf]);
            worst = std::max(worst, std::abs(num[a] / gf.atom_prob[static_cast<std::size_t>(t)][a] - p(leaf, t)));
        }
    }
    return worst;
}

// Max spread of p(., t) within G_t-atoms (0 for exactly G-adapted processes).
inline double g_adaptedness_residual(const TreeModel& tree, const EnlargedFiltration& gf, const RawProcess& p) {
    double worst = 0.0;
    for (int t = 0; t <= tree.depth(); ++t) {
        const auto& ids = gf.atom_of[static_cast<std::size_t>(t)];
        std::vector<double> lo(n_atoms(gf, t), std::numeric_limits<double>::infinity());
        std::vector<double> hi(n_atoms(gf, t), -std::numeric_limits<double>::infinity());
        for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
            const std::size_t a = static_cast<std::size_t>(ids[leaf]);
            lo[a] = std::min(lo[a], p(leaf, t));
            hi[a] = std::max(hi[a], p(leaf, t));
        }
        for (std::size_t a = 0; a < lo.size(); ++a) worst = std::max(worst, hi[a] - lo[a]);
    }
    return worst;
}

struct KeyLemmaResult {
    std::vector<double> z_ratio;   // E[x 1_C | F_t] / z_t on the region, 0 elsewhere
    std::vector<double> direct;    // atom-wise E[x | G_t] on the region, 0 elsewhere
    std::vector<std::uint8_t> region;  // {t >= T_n} cap C_n^k
    double max_abs_diff = 0.0;
};

inline KeyLemmaResult key_lemma_expectation(const TreeModel& tree, const ThinTimeModel& tt,
                                            const EnlargedFiltration& gf, const RandomVariable& x, int t,
                                            std::size_t cell_index) {
    if (t < 0 || t > tree.depth()) fail(ErrorKind::TimeOutOfRange, "t = " + std::to_string(t));
    if (cell_index >= tt.cells.size()) fail(ErrorKind::CellEmpty, "no such cell");
    const PartitionCell& cell = tt.cells[cell_index];
    if (cell.prob <= 0.0) fail(ErrorKind::CellEmpty, "cell has zero mass");

    RandomVariable x_on_cell;
    x_on_cell.values.assign(tree.n_leaves(), 0.0);
    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf)
        if (cell.indicator[leaf]) x_on_cell.values[leaf] = x.values[leaf];
    const std::vector<double> num = conditional_expectation(tree, x_on_cell, t);
    const std::vector<double> direct_all = g_conditional_expectation(tree, gf, x, t);

    KeyLemmaResult res;
    res.z_ratio.assign(tree.n_leaves(), 0.0);
    res.direct.assign(tree.n_leaves(), 0.0);
    res.region.assign(tree.n_leaves(), 0);
    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
        if (!cell.indicator[leaf] || tt.tau.time[leaf] > t) continue;
        const std::size_t node = tree.node_of(leaf, t);
        const double z = cell.z.at[static_cast<std::size_t>(t)][node];
        if (!(z > 0.0)) fail(ErrorKind::ZeroDenominator, "z_t = 0 on its own cell");
        res.region[leaf] = 1;
        res.z_ratio[leaf] = num[node] / z;
        res.direct[leaf] = direct_all[leaf];
        res.max_abs_diff = std::max(res.max_abs_diff, std::abs(res.z_ratio[leaf] - res.direct[leaf]));
    }
    return res;
}

struct DecompositionReport {
    RawProcess X;        // integral of the integrand against Y
    RawProcess hatX;     // G-martingale part
    RawProcess drift_b;  // pre-tau drift, sum of G_s/Z_{s-1} d<Y,m>_s
    RawProcess drift_a;  // post-T_n cell drifts, sum of G_s/z_{s-1} d<Y,z>_s
    double residual = 0.0;  // G-martingale residual of hatX
};

// Canonical decomposition of X = integral(G dY) as a G-semimartingale.
// The discrete predictable bracket d<U,V>_s = E[dU_s dV_s | F_{s-1}] makes
// hatX an exact G-martingale; checked and reported.
inline DecompositionReport decompose(const TreeModel& tree, const ThinTimeModel& tt, const EnlargedFiltration& gf,
                                     const SurvivalBundle& sb, const RawProcess& integrand,
                                     const AdaptedProcess& martingale) {
    require_raw_shape(tree, integrand, "decompose integrand");
    const MartingaleReport mr = check_martingale(tree, martingale);
    if (!mr.is_martingale())
        fail(ErrorKind::NotMartingale, "integrator residual " + std::to_string(mr.max_residual));

    // G-predictability: the value used on step s must be known at s-1.
    for (int s = 1; s <= tree.depth(); ++s) {
        const auto& ids = gf.atom_of[static_cast<std::size_t>(s) - 1];
        std::vector<double> seen(n_atoms(gf, s - 1), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
            const std::size_t a = static_cast<std::size_t>(ids[leaf]);
            const double g = integrand(leaf, s);
            if (!std::isfinite(g)) fail(ErrorKind::NotPredictable, "non-finite integrand");
            if (std::isnan(seen[a]))
                seen[a] = g;
            else if (std::abs(seen[a] - g) > 1e-12)
                fail(ErrorKind::NotPredictable,
                     "integrand at step " + std::to_string(s) + " is not G_{s-1}-measurable");
        }
    }

    const auto bm = predictable_cov_increments(tree, martingale, sb.m);
    std::vector<std::vector<std::vector<double>>> bz(tt.cells.size());
    for (std::size_t c = 0; c < tt.cells.size(); ++c)
        bz[c] = predictable_cov_increments(tree, martingale, tt.cells[c].z);

    DecompositionReport rep;
    rep.X = RawProcess::zeros(tree.n_leaves(), tree.depth());
    rep.hatX = RawProcess::zeros(tree.n_leaves(), tree.depth());
    rep.drift_b = RawProcess::zeros(tree.n_leaves(), tree.depth());
    rep.drift_a = RawProcess::zeros(tree.n_leaves(), tree.depth());

    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
        double x = 0.0, db = 0.0, da = 0.0;
        const int cell_idx = tt.cell_of_leaf[leaf];
        for (int s = 1; s <= tree.depth(); ++s) {
            const std::size_t prev = tree.node_of(leaf, s - 1);
            const std::size_t cur = tree.node_of(leaf, s);
            const double g = integrand(leaf, s);
            const double dy = martingale.at[static_cast<std::size_t>(s)][cur] -
                              martingale.at[static_cast<std::size_t>(s) - 1][prev];
            x += g * dy;
            if (s <= tt.tau.time[leaf]) {
                const double zm = sb.Z.at[static_cast<std::size_t>(s) - 1][prev];
                if (!(zm > 0.0)) fail(ErrorKind::ZeroDenominator, "Z_{s-1} = 0 on {s <= tau}");
                db += g / zm * bm[static_cast<std::size_t>(s) - 1][prev];
            } else if (cell_idx >= 0) {
                const PartitionCell& cell = tt.cells[static_cast<std::size_t>(cell_idx)];
                const double zc = cell.z.at[static_cast<std::size_t>(s) - 1][prev];
                if (!(zc > 0.0)) fail(ErrorKind::ZeroDenominator, "z_{s-1} = 0 on the cell");
                da += g / zc * bz[static_cast<std::size_t>(cell_idx)][static_cast<std::size_t>(s) - 1][prev];
            }
            rep.X(leaf, s) = x;
            rep.drift_b(leaf, s) = db;
            rep.drift_a(leaf, s) = da;
            rep.hatX(leaf, s) = x - db - da;
        }
    }
    rep.residual = g_martingale_residual(tree, gf, rep.hatX);
    return rep;
}

struct InformationMartingales {
    RawProcess Yb;      // pre-tau information martingale
    RawProcess Ya;      // post-tau cell information martingale
    RawProcess qv_Yb;   // pathwise quadratic variation of Yb
    RawProcess qv_Ya;   // pathwise quadratic variation of Ya
    double yb_residual = 0.0;        // G-martingale residual
    double ya_residual = 0.0;
    double support_overlap = 0.0;    // max |dYb . dYa| over (leaf, time)
    double e_qv_ya_total = 0.0;      // E[ [Ya]_depth ]
    double e_qv_yb_total = 0.0;      // E[ [Yb]_depth ]
};

inline InformationMartingales information_martingales(const TreeModel& tree, const ThinTimeModel& tt,
                                                      const EnlargedFiltration& gf, const SurvivalBundle& sb) {
    const auto b_mm = predictable_cov_increments(tree, sb.m, sb.m);
    std::vector<std::vector<std::vector<double>>> b_mz(tt.cells.size());
    std::vector<std::vector<std::vector<double>>> b_zz(tt.cells.size());
    for (std::size_t c = 0; c < tt.cells.size(); ++c) {
        b_mz[c] = predictable_cov_increments(tree, sb.m, tt.cells[c].z);
        b_zz[c] = predictable_cov_increments(tree, tt.cells[c].z, tt.cells[c].z);
    }

    InformationMartingales im;
    im.Yb = RawProcess::zeros(tree.n_leaves(), tree.depth());
    im.Ya = RawProcess::zeros(tree.n_leaves(), tree.depth());
    im.qv_Yb = RawProcess::zeros(tree.n_leaves(), tree.depth());
    im.qv_Ya = RawProcess::zeros(tree.n_leaves(), tree.depth());

    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
        double yb = 0.0, ya = 0.0, qb = 0.0, qa = 0.0;
        const int cell_idx = tt.cell_of_leaf[leaf];
        for (int s = 1; s <= tree.depth(); ++s) {
            const std::size_t prev = tree.node_of(leaf, s - 1);
            const std::size_t cur = tree.node_of(leaf, s);
            if (s <= tt.tau.time[leaf]) {
                const double zm = sb.Z.at[static_cast<std::size_t>(s) - 1][prev];
                const double dm = sb.m.at[static_cast<std::size_t>(s)][cur] -
                                  sb.m.at[static_cast<std::size_t>(s) - 1][prev];
                const double dm_hat = dm - b_mm[static_cast<std::size_t>(s) - 1][prev] / zm;
                const double dyb = dm_hat / zm;
                yb += dyb;
                qb += dyb * dyb;
            } else if (cell_idx >= 0) {
                const PartitionCell& cell = tt.cells[static_cast<std::size_t>(cell_idx)];
                const double zc = cell.z.at[static_cast<std::size_t>(s) - 1][prev];
                const double dz = cell.z.at[static_cast<std::size_t>(s)][cur] -
                                  cell.z.at[static_cast<std::size_t>(s) - 1][prev];
                const double dz_hat =
                    dz - b_zz[static_cast<std::size_t>(cell_idx)][static_cast<std::size_t>(s) - 1][prev] / zc;
                const double dya = dz_hat / zc;
                ya += dya;
                qa += dya * dya;
            }
            im.Yb(leaf, s) = yb;
            im.Ya(leaf, s) = ya;
            im.qv_Yb(leaf, s) = qb;
            im.qv_Ya(leaf, s) = qa;
        }
    }
    im.yb_residual = g_martingale_residual(tree, gf, im.Yb);
    im.ya_residual = g_martingale_residual(tree, gf, im.Ya);
    double overlap = 0.0;
    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf)
        for (int s = 1; s <= tree.depth(); ++s) {
            const double dyb = im.Yb(leaf, s) - im.Yb(leaf, s - 1);
            const double dya = im.Ya(leaf, s) - im.Ya(leaf, s - 1);
            overlap = std::max(overlap, std::abs(dyb * dya));
        }
    im.support_overlap = overlap;
    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
        im.e_qv_ya_total += tree.leaf_prob(leaf) * im.qv_Ya(leaf, tree.depth());
        im.e_qv_yb_total += tree.leaf_prob(leaf) * im.qv_Yb(leaf, tree.depth());
    }
    return im;
}

}  // namespace thintime
