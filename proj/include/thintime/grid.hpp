#pragma once

// Fine-grid Monte Carlo backend. The cell-probability system z^{n,k} is
// simulated as a vector martingale in the probability simplex; the realized
// cell is the absorption outcome (drawn from z at the end of the run when a
// path stops interior). Identities from the continuous theory are estimated
// with standard errors; discretization enters through pinned allowances.
//
// Drivers:
//   absorbed-brownian — projected Gaussian increments of common scale; a step
//     that would exit [0,1] is scaled back so the binding coordinate lands
//     exactly on the boundary and freezes there.
//   logistic — dz_j = sigma z_j(1-z_j) dW_j with a shared-noise projection
//     keeping the simplex sum exact; coordinates freeze in a small band at
//     the boundary, which the run-length extension makes asymptotically
//     equivalent to absorption.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "thintime/errors.hpp"
#include "thintime/parallel.hpp"
#include "thintime/rng.hpp"
#include "thintime/stats.hpp"

namespace thintime {

enum class ZDriver { AbsorbedBrownian, Logistic };

struct GridCellSpec {
    int n = 1;       // exhausting-sequence index (1-based)
    int k = 0;       // mark
    double z0 = 0.5;
    double t = 0.0;  // deterministic exhausting time t_n
};

struct GridScenario {
    std::string id = "grid";
    double horizon = 1.0;
    int steps = 1024;
    ZDriver driver = ZDriver::AbsorbedBrownian;
    double sigma0 = 1.4142135623730951;  // absorbed-brownian increment scale
    double sigma = 1.0;                  // logistic volatility
    std::vector<GridCellSpec> cells;
    double infinity_z0 = 0.0;
    int extension_factor = 64;  // run-to-absorption cap, in multiples of `steps`
    double absorb_tol = 1e-6;
    double clamp_eps = 1e-9;

    double dt() const { return horizon / steps; }
};

// Probe grid: fractions of the horizon at which z is recorded. The first,
// the T/4 and the T/2 entries double as probe times for the xlogx identity.
inline const std::vector<int>& probe_sixteenths() {
    static const std::vector<int> k{0, 1, 2, 4, 6, 8, 10, 12, 14, 15, 16};
    return k;
}
inline const std::vector<std::size_t>& xlogx_probe_positions() {
    static const std::vector<std::size_t> p{0, 3, 5};  // t = 0, T/4, T/2
    return p;
}

inline void validate_grid_scenario(const GridScenario& s) {
    if (s.steps < 2) fail(ErrorKind::StepTooCoarse, "steps must be >= 2");
    if (!(s.horizon > 0.0)) fail(ErrorKind::SchemaError, "horizon must be positive");
    if (s.cells.empty()) fail(ErrorKind::SchemaError, "at least one finite cell required");
    if (s.extension_factor < 1) fail(ErrorKind::SchemaError, "extension_factor must be >= 1");
    double sum = s.infinity_z0;
    if (s.infinity_z0 < 0.0 || s.infinity_z0 >= 1.0) fail(ErrorKind::SchemaError, "infinity_z0 outside [0,1)");
    for (const auto& c : s.cells) {
        if (!(c.z0 > 0.0) || c.z0 > 1.0) fail(ErrorKind::SchemaError, "cell z0 outside (0,1]");
        if (c.t < 0.0 || c.t > s.horizon) fail(ErrorKind::SchemaError, "exhausting time outside [0, horizon]");
        sum += c.z0;
    }
    if (std::abs(sum - 1.0) > 1e-12) fail(ErrorKind::ProbabilitySumMismatch, "initial probabilities sum != 1");
    // entries: same n -> same time; distinct n -> distinct, increasing times
    for (std::size_t a = 0; a < s.cells.size(); ++a)
        for (std::size_t b = a + 1; b < s.cells.size(); ++b) {
            if (s.cells[a].n == s.cells[b].n) {
                if (s.cells[a].t != s.cells[b].t) fail(ErrorKind::SchemaError, "one entry, two exhausting times");
                if (s.cells[a].k == s.cells[b].k) fail(ErrorKind::SchemaError, "duplicate cell (n,k)");
            } else if (s.cells[a].t == s.cells[b].t) {
                fail(ErrorKind::OverlappingGraphs, "distinct entries share an exhausting time");
            }
        }
    for (const auto& c : s.cells) {
        const double steps_in = c.t / s.horizon * s.steps;
        if (std::abs(steps_in - std::llround(steps_in)) > 1e-9)
            fail(ErrorKind::SchemaError, "exhausting time not on the step grid");
    }
    if (s.driver == ZDriver::Logistic && s.dt() * s.sigma * s.sigma > 0.1)
        fail(ErrorKind::StepTooCoarse, "dt * sigma^2 > 0.1 for the logistic driver");
}

struct PathBatch {
    GridScenario scenario;
    std::size_t n_paths = 0;
    std::uint64_t master_seed = 0;
    int n_coords = 0;  // finite cells + 1; coordinate 0 is the infinity cell
    std::vector<double> probe_times;
    std::vector<double> xprobe_times;

    // per-path columns (fixed layout; all reductions run in path order)
    std::vector<std::int8_t> realized;     // coordinate index
    std::vector<std::uint8_t> unabsorbed;  // stopped at the step cap while interior
    std::vector<double> tau;               // exhausting time of the realized cell, inf on coordinate 0
    std::vector<double> inf_z;             // inf_{t >= T_n} z of the realized cell (finite cells)
    std::vector<double> log_inv_inf;       // log(1/I) on finite cells, 0 otherwise
    std::vector<double> qv_ya;             // bracket of Ya to the end of the run
    std::vector<double> qv_yb_tau;         // bracket of Yb stopped at tau
    std::vector<double> h_log;             // log(1/z_{T_n}) of the realized cell, 0 on coordinate 0
    std::vector<double> tail_bound;        // unrevealed bracket mass 2 z log(1/z) at the stop state
    std::vector<double> simplex_residual;  // max |sum z - 1| along the path
    std::vector<double> z_probe;           // [i][coord][probe]
    std::vector<double> xlogx_tail;        // [i][coord][xprobe]
    std::vector<double> z_at_tn;           // [i][finite cell]

    // optional rectangular trajectory dump of the first `dumped` paths,
    // values at grid times 0..steps (frozen values persist)
    std::size_t dumped = 0;
    std::vector<double> dump;  // [path][coord][0..steps]

    double zp(std::size_t i, int j, std::size_t p) const {
        return z_probe[(i * static_cast<std::size_t>(n_coords) + static_cast<std::size_t>(j)) * probe_times.size() + p];
    }
    double xtail(std::size_t i, int j, std::size_t p) const {
        return xlogx_tail[(i * static_cast<std::size_t>(n_coords) + static_cast<std::size_t>(j)) * xprobe_times.size() +
                          p];
    }
    double ztn(std::size_t i, std::size_t cell) const { return z_at_tn[i * scenario.cells.size() + cell]; }

    std::uint64_t digest() const {
        Digest d;
        d.add(static_cast<std::uint64_t>(n_paths));
        for (std::size_t i = 0; i < n_paths; ++i) {
            d.add(static_cast<std::uint64_t>(static_cast<std::uint8_t>(realized[i])));
            d.add(tau[i]);
            d.add(inf_z[i]);
            d.add(qv_ya[i]);
            d.add(qv_yb_tau[i]);
            d.add(h_log[i]);
        }
        for (double v : z_probe) d.add(v);
        for (double v : xlogx_tail) d.add(v);
        return d.value();
    }
};

inline double unrevealed_bracket_mass(double z) { return (z > 0.0 && z < 1.0) ? -2.0 * z * std::log(z) : 0.0; }

inline PathBatch simulate(const GridScenario& scenario, std::size_t n_paths, std::uint64_t master_seed,
                          unsigned workers = 0, std::size_t dump_first = 0) {
    validate_grid_scenario(scenario);
    if (n_paths < 1) fail(ErrorKind::SchemaError, "n_paths must be >= 1");

    const int n_finite = static_cast<int>(scenario.cells.size());
    const int n_coords = n_finite + 1;
    const int steps = scenario.steps;
    const double dt = scenario.dt();
    const double sqrt_dt = std::sqrt(dt);
    const long total_steps = static_cast<long>(scenario.extension_factor) * steps;
    constexpr double kSnapBand = 1e-12;

    std::vector<long> t_n_step(static_cast<std::size_t>(n_coords), std::numeric_limits<long>::max());
    for (int j = 1; j < n_coords; ++j)
        t_n_step[static_cast<std::size_t>(j)] =
            std::llround(scenario.cells[static_cast<std::size_t>(j) - 1].t / scenario.horizon * steps);

    PathBatch batch;
    batch.scenario = scenario;
    batch.n_paths = n_paths;
    batch.master_seed = master_seed;
    batch.n_coords = n_coords;
    std::vector<long> probe_steps;
    for (int s16 : probe_sixteenths()) {
        probe_steps.push_back(std::llround(static_cast<double>(steps) * s16 / 16.0));
        batch.probe_times.push_back(scenario.horizon * s16 / 16.0);
    }
    for (std::size_t pos : xlogx_probe_positions()) batch.xprobe_times.push_back(batch.probe_times[pos]);
    const std::size_t n_probes = batch.probe_times.size();
    const std::size_t n_xprobes = batch.xprobe_times.size();

    batch.realized.assign(n_paths, 0);
    batch.unabsorbed.assign(n_paths, 0);
    batch.tau.assign(n_paths, 0.0);
    batch.inf_z.assign(n_paths, 0.0);
    batch.log_inv_inf.assign(n_paths, 0.0);
    batch.qv_ya.assign(n_paths, 0.0);
    batch.qv_yb_tau.assign(n_paths, 0.0);
    batch.h_log.assign(n_paths, 0.0);
    batch.tail_bound.assign(n_paths, 0.0);
    batch.simplex_residual.assign(n_paths, 0.0);
    batch.z_probe.assign(n_paths * static_cast<std::size_t>(n_coords) * n_probes, 0.0);
    batch.xlogx_tail.assign(n_paths * static_cast<std::size_t>(n_coords) * n_xprobes, 0.0);
    batch.z_at_tn.assign(n_paths * static_cast<std::size_t>(n_finite), 0.0);
    batch.dumped = std::min(dump_first, n_paths);
    if (batch.dumped > 0)
        batch.dump.assign(batch.dumped * static_cast<std::size_t>(n_coords) * static_cast<std::size_t>(steps + 1), 0.0);

    const double band = scenario.driver == ZDriver::Logistic ? scenario.absorb_tol : 0.0;

    parallel_for(n_paths, [&](std::size_t path) {
        std::mt19937_64 engine = make_path_engine(master_seed, path);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> uniform(0.0, 1.0);

        std::vector<double> z(static_cast<std::size_t>(n_coords));
        std::vector<bool> frozen(static_cast<std::size_t>(n_coords));
        z[0] = scenario.infinity_z0;
        for (int j = 1; j < n_coords; ++j) z[static_cast<std::size_t>(j)] = scenario.cells[static_cast<std::size_t>(j) - 1].z0;
        for (int j = 0; j < n_coords; ++j) {
            auto& v = z[static_cast<std::size_t>(j)];
            frozen[static_cast<std::size_t>(j)] = (v <= band || v >= 1.0 - band);
        }

        std::vector<double> cum_xlogx(static_cast<std::size_t>(n_coords), 0.0);
        std::vector<double> cum_qv_ya(static_cast<std::size_t>(n_coords), 0.0);
        std::vector<double> inf_after(static_cast<std::size_t>(n_coords), std::numeric_limits<double>::quiet_NaN());
        std::vector<double> z_tn(static_cast<std::size_t>(n_coords), std::numeric_limits<double>::quiet_NaN());
        std::vector<double> yb_checkpoint(static_cast<std::size_t>(n_coords), std::numeric_limits<double>::quiet_NaN());
        std::vector<double> xlogx_cp(n_xprobes, std::numeric_limits<double>::quiet_NaN());
        double cum_qv_yb = 0.0;
        double worst_simplex = 0.0;

        std::size_t probe_ptr = 0;
        std::vector<double> delta(static_cast<std::size_t>(n_coords), 0.0);
        std::vector<double> xi(static_cast<std::size_t>(n_coords), 0.0);
        bool hit_cap = false;
        long last_dumped = -1;

        auto record_probe = [&](std::size_t p) {
            for (int j = 0; j < n_coords; ++j)
                batch.z_probe[(path * static_cast<std::size_t>(n_coords) + static_cast<std::size_t>(j)) * n_probes + p] =
                    z[static_cast<std::size_t>(j)];
            for (std::size_t xp = 0; xp < n_xprobes; ++xp)
                if (xlogx_probe_positions()[xp] == p)
                    for (int j = 0; j < n_coords; ++j)
                        batch.xlogx_tail[(path * static_cast<std::size_t>(n_coords) + static_cast<std::size_t>(j)) *
                                             n_xprobes +
                                         xp] = cum_xlogx[static_cast<std::size_t>(j)];  // checkpoint; converted below
        };

        for (long i = 0;; ++i) {
            while (probe_ptr < n_probes && probe_steps[probe_ptr] == i) {
                record_probe(probe_ptr);
                ++probe_ptr;
            }
            for (int j = 1; j < n_coords; ++j)
                if (t_n_step[static_cast<std::size_t>(j)] == i) {
                    z_tn[static_cast<std::size_t>(j)] = z[static_cast<std::size_t>(j)];
                    inf_after[static_cast<std::size_t>(j)] = z[static_cast<std::size_t>(j)];
                    yb_checkpoint[static_cast<std::size_t>(j)] = cum_qv_yb;
                }
            if (path < batch.dumped && i <= steps) {
                for (int j = 0; j < n_coords; ++j)
                    batch.dump[(path * static_cast<std::size_t>(n_coords) + static_cast<std::size_t>(j)) *
                                   static_cast<std::size_t>(steps + 1) +
                               static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(j)];
                last_dumped = i;
            }

            bool all_frozen = true;
            int n_active = 0;
            for (int j = 0; j < n_coords; ++j)
                if (!frozen[static_cast<std::size_t>(j)]) {
                    all_frozen = false;
                    ++n_active;
                }
            if (all_frozen) break;
            if (i >= total_steps) {
                hit_cap = true;
                break;
            }
            if (n_active == 1) {
                // the simplex constraint pins a lone interior coordinate; snap it
                for (int j = 0; j < n_coords; ++j)
                    if (!frozen[static_cast<std::size_t>(j)]) {
                        z[static_cast<std::size_t>(j)] = z[static_cast<std::size_t>(j)] > 0.5 ? 1.0 : 0.0;
                        frozen[static_cast<std::size_t>(j)] = true;
                    }
                continue;
            }

            // increments
            if (scenario.driver == ZDriver::AbsorbedBrownian) {
                double mean = 0.0;
                for (int j = 0; j < n_coords; ++j)
                    if (!frozen[static_cast<std::size_t>(j)]) {
                        xi[static_cast<std::size_t>(j)] = normal(engine);
                        mean += xi[static_cast<std::size_t>(j)];
                    }
                mean /= n_active;
                for (int j = 0; j < n_coords; ++j)
                    delta[static_cast<std::size_t>(j)] = frozen[static_cast<std::size_t>(j)]
                                                             ? 0.0
                                                             : scenario.sigma0 * sqrt_dt * (xi[static_cast<std::size_t>(j)] - mean);
            } else {
                double su = 0.0, sux = 0.0;
                for (int j = 0; j < n_coords; ++j) {
                    if (frozen[static_cast<std::size_t>(j)]) continue;
                    const double u = z[static_cast<std::size_t>(j)] * (1.0 - z[static_cast<std::size_t>(j)]);
                    xi[static_cast<std::size_t>(j)] = normal(engine);
                    su += u;
                    sux += u * xi[static_cast<std::size_t>(j)];
                }
                const double c = su > 0.0 ? sux / su : 0.0;
                for (int j = 0; j < n_coords; ++j) {
                    if (frozen[static_cast<std::size_t>(j)]) {
                        delta[static_cast<std::size_t>(j)] = 0.0;
                        continue;
                    }
                    const double u = z[static_cast<std::size_t>(j)] * (1.0 - z[static_cast<std::size_t>(j)]);
                    delta[static_cast<std::size_t>(j)] =
                        scenario.sigma * sqrt_dt * u * (xi[static_cast<std::size_t>(j)] - c);
                }
            }

            // scale the whole increment so the first boundary touch is exact
            double alpha = 1.0;
            for (int j = 0; j < n_coords; ++j) {
                if (frozen[static_cast<std::size_t>(j)]) continue;
                const double d = delta[static_cast<std::size_t>(j)];
                const double v = z[static_cast<std::size_t>(j)];
                if (d > 1e-300)
                    alpha = std::min(alpha, ((1.0 - band) - v) / d);
                else if (d < -1e-300)
                    alpha = std::min(alpha, (v - band) / (-d));
            }
            if (alpha < 0.0) alpha = 0.0;

            double dm = 0.0, z_left_m = 0.0;
            for (int j = 0; j < n_coords; ++j) {
                if (frozen[static_cast<std::size_t>(j)]) {
                    if (j == 0 || i < t_n_step[static_cast<std::size_t>(j)]) z_left_m += z[static_cast<std::size_t>(j)];
                    continue;
                }
                const double dz = alpha * delta[static_cast<std::size_t>(j)];
                const double left = std::max(z[static_cast<std::size_t>(j)], scenario.clamp_eps);
                cum_xlogx[static_cast<std::size_t>(j)] += dz * dz / left;
                if (j > 0 && i >= t_n_step[static_cast<std::size_t>(j)])
                    cum_qv_ya[static_cast<std::size_t>(j)] += dz * dz / (left * left);
                if (j == 0 || i < t_n_step[static_cast<std::size_t>(j)]) {
                    dm += dz;
                    z_left_m += z[static_cast<std::size_t>(j)];
                }
                z[static_cast<std::size_t>(j)] += dz;
            }
            {
                const double zl = std::max(z_left_m, scenario.clamp_eps);
                cum_qv_yb += dm * dm / (zl * zl);
            }

            // snap and freeze boundary touches
            double sum = 0.0;
            for (int j = 0; j < n_coords; ++j) {
                auto& v = z[static_cast<std::size_t>(j)];
                if (!frozen[static_cast<std::size_t>(j)]) {
                    if (v <= band + kSnapBand) {
                        v = scenario.driver == ZDriver::Logistic ? band : 0.0;
                        frozen[static_cast<std::size_t>(j)] = true;
                    } else if (v >= 1.0 - band - kSnapBand) {
                        v = scenario.driver == ZDriver::Logistic ? 1.0 - band : 1.0;
                        frozen[static_cast<std::size_t>(j)] = true;
                    }
                }
                sum += v;
                if (j > 0 && i >= t_n_step[static_cast<std::size_t>(j)] &&
                    !std::isnan(inf_after[static_cast<std::size_t>(j)]))
                    inf_after[static_cast<std::size_t>(j)] =
                        std::min(inf_after[static_cast<std::size_t>(j)], v);
            }
            worst_simplex = std::max(worst_simplex, std::abs(sum - 1.0));
        }

        // fill probes and checkpoints not reached before the path froze
        while (probe_ptr < n_probes) {
            record_probe(probe_ptr);
            ++probe_ptr;
        }
        for (int j = 1; j < n_coords; ++j)
            if (std::isnan(z_tn[static_cast<std::size_t>(j)])) {
                z_tn[static_cast<std::size_t>(j)] = z[static_cast<std::size_t>(j)];
                inf_after[static_cast<std::size_t>(j)] = z[static_cast<std::size_t>(j)];
                yb_checkpoint[static_cast<std::size_t>(j)] = cum_qv_yb;
            }
        if (path < batch.dumped)
            for (long i = last_dumped + 1; i <= steps; ++i)  // frozen values persist
                for (int j = 0; j < n_coords; ++j)
                    batch.dump[(path * static_cast<std::size_t>(n_coords) + static_cast<std::size_t>(j)) *
                                   static_cast<std::size_t>(steps + 1) +
                               static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(j)];

        // convert xlogx checkpoints into tails from each probe
        for (std::size_t xp = 0; xp < n_xprobes; ++xp)
            for (int j = 0; j < n_coords; ++j) {
                auto& slot = batch.xlogx_tail[(path * static_cast<std::size_t>(n_coords) + static_cast<std::size_t>(j)) *
                                                  n_xprobes +
                                              xp];
                slot = cum_xlogx[static_cast<std::size_t>(j)] - slot;
            }

        // terminal cell draw with probabilities z(end)
        double total = 0.0;
        for (int j = 0; j < n_coords; ++j) total += z[static_cast<std::size_t>(j)];
        const double u = uniform(engine) * total;
        int realized = n_coords - 1;
        double acc = 0.0;
        for (int j = 0; j < n_coords; ++j) {
            acc += z[static_cast<std::size_t>(j)];
            if (u <= acc) {
                realized = j;
                break;
            }
        }

        double tail = 0.0;
        for (int j = 1; j < n_coords; ++j) tail += unrevealed_bracket_mass(z[static_cast<std::size_t>(j)]);

        batch.realized[path] = static_cast<std::int8_t>(realized);
        batch.unabsorbed[path] = hit_cap ? 1 : 0;
        batch.simplex_residual[path] = worst_simplex;
        batch.tail_bound[path] = tail;
        for (int j = 1; j < n_coords; ++j)
            batch.z_at_tn[path * static_cast<std::size_t>(n_finite) + static_cast<std::size_t>(j) - 1] =
                z_tn[static_cast<std::size_t>(j)];
        if (realized == 0) {
            batch.tau[path] = std::numeric_limits<double>::infinity();
            batch.inf_z[path] = 0.0;
            batch.log_inv_inf[path] = 0.0;
            batch.qv_ya[path] = 0.0;
            batch.h_log[path] = 0.0;
            batch.qv_yb_tau[path] = cum_qv_yb;  // tau = inf: the bracket runs to the end
        } else {
            const auto rj = static_cast<std::size_t>(realized);
            batch.tau[path] = scenario.cells[rj - 1].t;
            const double inf_v = std::max(inf_after[rj], scenario.clamp_eps);
            batch.inf_z[path] = inf_v;
            batch.log_inv_inf[path] = std::log(1.0 / inf_v);
            batch.qv_ya[path] = cum_qv_ya[rj];
            batch.h_log[path] = std::log(1.0 / std::max(z_tn[rj], scenario.clamp_eps));
            batch.qv_yb_tau[path] = yb_checkpoint[rj];
        }
    }, workers);

    return batch;
}

// ---------------------------------------------------------------------------
// batch-level checks
// ---------------------------------------------------------------------------

// Pinned discretization allowance for bracket-vs-entropy comparisons. The
// coefficient is an artifact constant calibrated once against refinement
// sweeps of the absorbed driver; it scales like the per-step increment.
inline double bracket_bias_allowance(const GridScenario& s, double entropy_scale) {
    const double scale = s.driver == ZDriver::AbsorbedBrownian ? s.sigma0 : 0.25 * s.sigma;
    return 2.0 * scale * std::sqrt(s.dt()) * (1.0 + 2.0 * std::abs(entropy_scale));
}

struct BracketEntropyResult {
    Estimate qv_ya;       // estimate of E<Ya>_inf
    Estimate entropy;     // estimate of H = H_1(xi, tau)
    Estimate diff;        // per-path qv_ya - 2 h_log
    double tail_allowance = 0.0;
    double bias_allowance = 0.0;
    double z_score = 0.0;
    bool pass = false;
};

inline BracketEntropyResult bracket_entropy_check(const PathBatch& batch) {
    BracketEntropyResult r;
    r.qv_ya = estimate_mean(batch.qv_ya);
    r.entropy = estimate_mean(batch.h_log);
    r.diff = estimate_mean_of(batch.n_paths, [&](std::size_t i) { return batch.qv_ya[i] - 2.0 * batch.h_log[i]; });
    if (r.diff.se == 0.0 && r.qv_ya.mean != 0.0) fail(ErrorKind::DegenerateVariance, "bracket check has zero spread");
    r.tail_allowance = estimate_mean(batch.tail_bound).mean;
    r.bias_allowance = bracket_bias_allowance(batch.scenario, r.entropy.mean);
    r.z_score = r.diff.z_score(0.0);
    r.pass = std::abs(r.diff.mean) <= 3.0 * r.diff.se + r.tail_allowance + r.bias_allowance;
    return r;
}

// Monte Carlo gamma-entropy from a batch: mean of (log 1/z_{T_n})^gamma over
// realized finite cells.
inline Estimate entropy_from_batch(const PathBatch& batch, double gamma) {
    if (!(gamma > 0.0)) fail(ErrorKind::GammaNonPositive, "gamma must be > 0");
    return estimate_mean_of(batch.n_paths, [&](std::size_t i) {
        return batch.realized[i] == 0 ? 0.0 : std::pow(batch.h_log[i], gamma);
    });
}

struct InfimumLawRow {
    double beta = 0.0;
    double empirical = 0.0;  // Q(I < beta) estimated under the cell measure
    double se = 0.0;
    double reference = 0.0;  // beta/(1-beta) * (1-z)/z averaged over F_{T_n}
};

struct InfimumLawResult {
    int coord = 0;  // finite-cell coordinate checked
    std::vector<InfimumLawRow> rows;
    double ks = 0.0;
    double tolerance = 0.0;
    std::size_t n_cell_paths = 0;
    bool pass = false;
};

// Conditional law of the post-T_n infimum under Q = P(. | C)/..., checked on
// a beta grid expressed as fractions of z_{T_n}. The tolerance is
// 1.36/sqrt(n_cell) plus twice a pinned grid allowance built from the
// discrete-monitoring undershoot of the running minimum.
inline InfimumLawResult infimum_law_check(const PathBatch& batch, int coord,
                                          const std::vector<double>& beta_fractions) {
    if (coord < 1 || coord >= batch.n_coords) fail(ErrorKind::NoCellPaths, "coordinate is not a finite cell");
    const double z0 = batch.scenario.cells[static_cast<std::size_t>(coord) - 1].z0;
    InfimumLawResult res;
    res.coord = coord;
    for (std::size_t i = 0; i < batch.n_paths; ++i)
        if (batch.realized[i] == coord) ++res.n_cell_paths;
    if (res.n_cell_paths == 0) fail(ErrorKind::NoCellPaths, "no paths realized the cell");

    for (double q : beta_fractions) {
        InfimumLawRow row;
        // pooled beta = q * z_{T_n} path by path; both sides are Q-expectations
        Estimate emp = estimate_mean_of(batch.n_paths, [&](std::size_t i) {
            if (batch.realized[i] != coord) return 0.0;
            const double beta = q * batch.ztn(i, static_cast<std::size_t>(coord) - 1);
            return (batch.inf_z[i] < beta ? 1.0 : 0.0) / z0;
        });
        Estimate ref = estimate_mean_of(batch.n_paths, [&](std::size_t i) {
            if (batch.realized[i] != coord) return 0.0;
            const double z = batch.ztn(i, static_cast<std::size_t>(coord) - 1);
            const double beta = q * z;
            if (!(z > 0.0) || !(z < 1.0)) return (z >= 1.0 ? 0.0 : 0.0);
            const double v = beta / (1.0 - beta) * (1.0 - z) / z;
            return std::min(v, 1.0) / z0;
        });
        row.beta = q;
        row.empirical = emp.mean;
        row.se = emp.se;
        row.reference = ref.mean;
        res.ks = std::max(res.ks, std::abs(row.empirical - row.reference));
        res.rows.push_back(row);
    }

    // grid allowance: expected undershoot of a discretely monitored minimum,
    // 0.5826 * s * sqrt(dt) (s = per-step scale), through the density of the
    // reference law at the largest beta in the grid.
    const GridScenario& s = batch.scenario;
    const double step_scale = s.driver == ZDriver::AbsorbedBrownian ? s.sigma0 : 0.25 * s.sigma;
    double zbar = 0.0;
    {
        Estimate z_mean = estimate_mean_of(batch.n_paths, [&](std::size_t i) {
            return batch.realized[i] == coord ? batch.ztn(i, static_cast<std::size_t>(coord) - 1) / z0 : 0.0;
        });
        zbar = std::min(std::max(z_mean.mean, 0.05), 0.999);
    }
    double qmax = 0.0;
    for (double q : beta_fractions) qmax = std::max(qmax, q);
    const double density = (1.0 - zbar) / (zbar * (1.0 - qmax * zbar) * (1.0 - qmax * zbar) + 1e-12);
    const double grid_allowance = 0.5826 * step_scale * std::sqrt(s.dt()) * std::max(density, 1.0);
    res.tolerance = 1.36 / std::sqrt(static_cast<double>(res.n_cell_paths)) + 2.0 * grid_allowance;
    res.pass = res.ks <= res.tolerance;
    return res;
}

// Spot value Q(I < beta) for a fixed absolute beta (binomial standard error).
inline Estimate infimum_spot_probability(const PathBatch& batch, int coord, double beta) {
    const double z0 = batch.scenario.cells[static_cast<std::size_t>(coord) - 1].z0;
    return estimate_mean_of(batch.n_paths, [&](std::size_t i) {
        return batch.realized[i] == coord && batch.inf_z[i] < beta ? 1.0 / z0 : 0.0;
    });
}

struct Lem1Result {
    double gamma = 1.0;
    Estimate log_inv_inf_pow;  // E[(log 1/I)^gamma]
    Estimate qv_ya_pow;        // E[<Ya>^gamma]
    double ratio = 0.0;
    bool defined = false;
};

inline Lem1Result lem1_ratio_check(const PathBatch& batch, double gamma) {
    if (!(gamma > 0.0)) fail(ErrorKind::GammaNonPositive, "gamma must be > 0");
    Lem1Result r;
    r.gamma = gamma;
    r.log_inv_inf_pow = estimate_mean_of(batch.n_paths, [&](std::size_t i) {
        return batch.realized[i] == 0 ? 0.0 : std::pow(batch.log_inv_inf[i], gamma);
    });
    r.qv_ya_pow = estimate_mean_of(batch.n_paths, [&](std::size_t i) { return std::pow(batch.qv_ya[i], gamma); });
    if (r.qv_ya_pow.mean > 0.0 && r.log_inv_inf_pow.mean > 0.0) {
        r.ratio = r.log_inv_inf_pow.mean / r.qv_ya_pow.mean;
        r.defined = true;
    }
    return r;
}

// Moments of the Yb bracket stopped at tau (finiteness probe).
inline Estimate yb_bracket_moment(const PathBatch& batch, double gamma) {
    return estimate_mean_of(batch.n_paths, [&](std::size_t i) { return std::pow(batch.qv_yb_tau[i], gamma); });
}

struct XlogxRow {
    int coord = 0;
    double probe_time = 0.0;
    Estimate residual;       // E[int_t^inf (1/z) d<z> - 2 z_t log(1/z_t)]
    double reference = 0.0;  // mean of 2 z_t log(1/z_t), for reporting
};

inline std::vector<XlogxRow> xlogx_identity_check(const PathBatch& batch) {
    std::vector<XlogxRow> rows;
    for (int j = 0; j < batch.n_coords; ++j) {
        for (std::size_t p = 0; p < batch.xprobe_times.size(); ++p) {
            XlogxRow row;
            row.coord = j;
            row.probe_time = batch.xprobe_times[p];
            const std::size_t probe_pos = xlogx_probe_positions()[p];
            row.residual = estimate_mean_of(batch.n_paths, [&](std::size_t i) {
                const double z = batch.zp(i, j, probe_pos);
                return batch.xtail(i, j, p) - unrevealed_bracket_mass(z);
            });
            row.reference = estimate_mean_of(batch.n_paths, [&](std::size_t i) {
                                return unrevealed_bracket_mass(batch.zp(i, j, probe_pos));
                            }).mean;
            rows.push_back(row);
        }
    }
    return rows;
}

struct MartingaleProbeResult {
    double worst_abs_z = 0.0;
    int worst_coord = 0;
    std::size_t worst_interval = 0;
    bool pass(double z_cap = 4.0) const { return worst_abs_z <= z_cap; }
};

inline MartingaleProbeResult martingale_probe_check(const PathBatch& batch) {
    MartingaleProbeResult res;
    for (int j = 0; j < batch.n_coords; ++j)
        for (std::size_t p = 0; p + 1 < batch.probe_times.size(); ++p) {
            const Estimate inc = estimate_mean_of(batch.n_paths, [&](std::size_t i) {
                return batch.zp(i, j, p + 1) - batch.zp(i, j, p);
            });
            const double zs = inc.se > 0.0 ? std::abs(inc.mean) / inc.se : 0.0;
            if (zs > res.worst_abs_z) {
                res.worst_abs_z = zs;
                res.worst_coord = j;
                res.worst_interval = p;
            }
        }
    return res;
}

// Realized-cell frequency against z0 (law of large numbers, 4 SE).
struct FrequencyRow {
    int coord = 0;
    Estimate freq;
    double z0 = 0.0;
};

inline std::vector<FrequencyRow> realized_frequency_check(const PathBatch& batch) {
    std::vector<FrequencyRow> rows;
    for (int j = 0; j < batch.n_coords; ++j) {
        FrequencyRow row;
        row.coord = j;
        row.z0 = j == 0 ? batch.scenario.infinity_z0 : batch.scenario.cells[static_cast<std::size_t>(j) - 1].z0;
        row.freq = estimate_mean_of(batch.n_paths, [&](std::size_t i) { return batch.realized[i] == j ? 1.0 : 0.0; });
        rows.push_back(row);
    }
    return rows;
}

inline double max_simplex_residual(const PathBatch& batch) {
    double worst = 0.0;
    for (double v : batch.simplex_residual) worst = std::max(worst, v);
    return worst;
}

}  // namespace thintime
