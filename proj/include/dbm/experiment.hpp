#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbm/config.hpp"
#include "dbm/hydro.hpp"
#include "dbm/measure.hpp"
#include "dbm/sde.hpp"
#include "dbm/stats.hpp"

namespace dbm {

// Exit semantics of a pipeline run: Ok when every acceptance threshold in
// the config held, ThresholdFailure when the pipeline ran but a configured
// threshold was missed.
enum class RunStatus { Ok = 0, Error = 1, ThresholdFailure = 2 };

namespace io {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

}  // namespace io

// Initial particle data presets.
inline std::vector<double> initial_positions(const std::string& kind, int n,
                                             const std::string& file_path = "") {
    std::vector<double> x(static_cast<std::size_t>(n));
    if (kind == "semicircle") {
        // midpoint quantiles of the radius-2 semicircle
        for (int i = 0; i < n; ++i) {
            const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
            double lo = -2.0, hi = 2.0;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double cdf =
                    0.5 + (mid * std::sqrt(4.0 - mid * mid) * 0.5 + 2.0 * std::asin(0.5 * mid)) /
                              (2.0 * M_PI);
                (cdf < p ? lo : hi) = mid;
            }
            x[static_cast<std::size_t>(i)] = 0.5 * (lo + hi);
        }
    } else if (kind == "atom") {
        std::fill(x.begin(), x.end(), 0.0);
    } else if (kind == "two-atom") {
        for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = i < n / 2 ? -1.0 : 1.0;
    } else if (kind == "file") {
        std::ifstream in(file_path);
        if (!in) throw std::runtime_error("initial positions: cannot open " + file_path);
        x.clear();
        double v;
        while (in >> v) {
            x.push_back(v);
            if (in.peek() == ',') in.get();
        }
        if (static_cast<int>(x.size()) != n)
            throw std::runtime_error("initial positions: file holds " + std::to_string(x.size()) +
                                     " values, expected " + std::to_string(n));
        std::sort(x.begin(), x.end());
    } else {
        throw std::runtime_error("initial positions: unknown preset " + kind);
    }
    return x;
}

// Everything one experiment needs, decoded from a config file.
struct ExperimentSetup {
    std::string experiment;
    Potential pot = Potential::quadratic();
    ParticleConfiguration config0;
    SdeParams sde;
    int runs = 1;
    double t_end = 0.1;
    HydroParams hydro;
    std::string m0_kind = "empirical";  // empirical | semicircle | atom
    SpectralDomainParams domain;
    int threads = 0;
    bool dump_trajectories = false;

    static ExperimentSetup from_config(const Config& cfg, int threads) {
        ExperimentSetup s;
        s.threads = threads;
        s.experiment = cfg.str("experiment");

        const std::string kind = cfg.str_or("potential.kind", "quadratic");
        const double b_cut = cfg.number_or("potential.b_cut", 4.0);
        const double kappa = cfg.number_or("potential.kappa", 0.0);
        if (kind == "quadratic")
            s.pot = Potential::quadratic(b_cut, kappa);
        else if (kind == "quartic")
            s.pot = Potential::quartic(b_cut, kappa);
        else if (kind == "zero")
            s.pot = Potential::zero(b_cut);
        else if (kind == "poly")
            s.pot = Potential::polynomial(cfg.numbers_or("potential.coeffs", {0.0}), b_cut, kappa);
        else
            throw std::runtime_error("config: unknown potential.kind " + kind);

        const int n = static_cast<int>(cfg.integer("sde.n"));
        s.config0.positions = initial_positions(cfg.str_or("init.kind", "semicircle"), n,
                                                cfg.str_or("init.path", ""));
        s.config0.beta = cfg.number_or("sde.beta", 2.0);
        s.config0.time = 0.0;
        s.sde.step_h = cfg.number_or("sde.step_h", 0.0);
        s.sde.seed = static_cast<std::uint64_t>(cfg.integer_or("sde.seed", 1));
        s.sde.gap_floor = cfg.number_or("sde.gap_floor", -1.0);
        s.sde.noise = cfg.boolean_or("sde.noise", true);
        s.runs = static_cast<int>(cfg.integer_or("sde.runs", 1));
        s.t_end = cfg.number_or("sde.t_end", 0.1);
        s.dump_trajectories = cfg.boolean_or("sde.dump_trajectories", false);

        s.hydro.dt = cfg.number_or("hydro.dt", 1e-3);
        s.hydro.n_mf = static_cast<int>(cfg.integer_or("hydro.n_mf", 2000));
        s.hydro.eta_floor = cfg.number_or("hydro.eta_floor", 1e-6);
        s.hydro.mesh.nx = static_cast<int>(cfg.integer_or("hydro.mesh_x", 201));
        s.hydro.mesh.ny = static_cast<int>(cfg.integer_or("hydro.mesh_y", 20));
        s.hydro.mesh.x_lo = cfg.number_or("hydro.mesh_x_lo", -3.0);
        s.hydro.mesh.x_hi = cfg.number_or("hydro.mesh_x_hi", 3.0);
        s.hydro.mesh.y_lo = cfg.number_or("hydro.mesh_y_lo", 1e-3);
        s.hydro.mesh.y_hi = cfg.number_or("hydro.mesh_y_hi", 1.0);
        s.m0_kind = cfg.str_or("hydro.m0", "empirical");

        s.domain = SpectralDomainParams::make(std::max(n, 2), cfg.number_or("stats.delta", 0.1),
                                              cfg.number_or("stats.k_dom", 10.0),
                                              cfg.number_or("stats.c_exp", 3.0));
        return s;
    }

    InitialTransform initial_transform() const {
        if (m0_kind == "empirical") return InitialTransform::empirical(config0.positions);
        if (m0_kind == "semicircle") return InitialTransform::semicircle(2.0);
        if (m0_kind == "atom") return InitialTransform::atom(0.0);
        throw std::runtime_error("config: unknown hydro.m0 " + m0_kind);
    }

    std::vector<double> mean_field_init() const {
        if (m0_kind == "semicircle" || m0_kind == "empirical") {
            // quantile-resample the initial data to n_mf points
            if (m0_kind == "semicircle")
                return initial_positions("semicircle", hydro.n_mf);
            if (hydro.n_mf == config0.n()) return config0.positions;
            std::vector<double> out(static_cast<std::size_t>(hydro.n_mf));
            const std::size_t n = config0.positions.size();
            for (int i = 0; i < hydro.n_mf; ++i) {
                const double p = (static_cast<double>(i) + 0.5) / hydro.n_mf * static_cast<double>(n) - 0.5;
                const std::size_t k = static_cast<std::size_t>(std::clamp(p, 0.0, static_cast<double>(n - 1)));
                const std::size_t k1 = std::min(k + 1, n - 1);
                const double frac = std::clamp(p - static_cast<double>(k), 0.0, 1.0);
                out[static_cast<std::size_t>(i)] =
                    (1.0 - frac) * config0.positions[k] + frac * config0.positions[k1];
            }
            return out;
        }
        // atom: all mass at the origin; the solver spreads it
        return std::vector<double>(static_cast<std::size_t>(hydro.n_mf), 0.0);
    }

    HydroSolution make_hydro() const {
        return HydroSolution(pot, initial_transform(), hydro, mean_field_init(), threads);
    }
};

// Keys allowed in report JSON files.
inline const std::vector<std::string>& report_key_whitelist() {
    static const std::vector<std::string> keys = {
        "max_r",        "pass_fraction",  "violations",        "max_index_displacement",
        "cov_empirical", "cov_predicted", "cov_distance",      "sigma2_predicted",
        "sigma2_empirical", "runs"};
    return keys;
}

struct RunArtifacts {
    RunStatus status = RunStatus::Ok;
    nlohmann::ordered_json report;
    std::vector<std::pair<std::string, std::string>> files;  // name -> contents
};

namespace detail {

inline void warn_confinement(const std::vector<SdeMonitor>& monitors) {
    long total = 0;
    double worst = 0.0;
    for (const auto& m : monitors) {
        total += m.confinement_violations;
        worst = std::max(worst, m.max_abs_position);
    }
    if (total > 0)
        std::cerr << "warning: " << total << " run(s) left the confinement radius, max |position| = "
                  << worst << "\n";
}

inline void dump_trajectory_csv(std::string& csv, int run, const ParticleConfiguration& c) {
    for (int i = 0; i < c.n(); ++i) {
        csv += std::to_string(run);
        csv += ',';
        csv += io::format_double(c.time);
        csv += ',';
        csv += std::to_string(i);
        csv += ',';
        csv += io::format_double(c.positions[static_cast<std::size_t>(i)]);
        csv += '\n';
    }
}

inline std::string mesh_csv(const HydroSolution& sol) {
    std::string csv = "s,re_u,im_u,re_z,im_z,re_m,im_m,alive\n";
    for (const auto& c : sol.mesh()) {
        csv += io::format_double(c.s) + "," + io::format_double(c.u.real()) + "," +
               io::format_double(c.u.imag()) + "," + io::format_double(c.z.real()) + "," +
               io::format_double(c.z.imag()) + "," + io::format_double(c.m.real()) + "," +
               io::format_double(c.m.imag()) + "," + (c.alive ? "1" : "0") + "\n";
    }
    return csv;
}

}  // namespace detail

// --- experiments ------------------------------------------------------------

// Deterministic (E, eta) candidate grids for the local law probes.
inline std::vector<cplx> default_probe_candidates(double e_half, int ne, double eta_lo,
                                                  double eta_hi, int neta) {
    std::vector<cplx> out;
    out.reserve(static_cast<std::size_t>(ne) * neta);
    for (int iy = 0; iy < neta; ++iy) {
        const double fy = neta == 1 ? 0.0 : static_cast<double>(iy) / (neta - 1);
        const double eta = eta_lo * std::pow(eta_hi / eta_lo, fy);
        for (int ix = 0; ix < ne; ++ix) {
            const double e = ne == 1 ? 0.0 : -e_half + 2.0 * e_half * ix / (ne - 1);
            out.emplace_back(e, eta);
        }
    }
    return out;
}

inline RunArtifacts run_locallaw(const ExperimentSetup& s, const Config& cfg) {
    RunArtifacts art;
    HydroSolution hydro = s.make_hydro();
    hydro.advance_to(s.t_end);

    const double e_half = cfg.number_or("stats.grid_e_half", 0.5);
    const int ne = static_cast<int>(cfg.integer_or("stats.grid_e_count", 25));
    const double eta_lo = cfg.number_or("stats.grid_eta_lo", 0.2);
    const double eta_hi = cfg.number_or("stats.grid_eta_hi", 6.0);
    const int neta = static_cast<int>(cfg.integer_or("stats.grid_eta_count", 16));
    const std::size_t target = static_cast<std::size_t>(cfg.integer_or("stats.grid_target", 200));
    const auto candidates = default_probe_candidates(e_half, ne, eta_lo, eta_hi, neta);
    const std::vector<cplx> grid = domain_grid(s.domain, hydro, hydro.t(), s.config0.n(),
                                               s.pot.b_cut(), candidates, target);
    std::vector<cplx> m_values(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) m_values[i] = hydro.evaluate_m(grid[i]);

    std::vector<SdeMonitor> monitors;
    const std::vector<ParticleConfiguration> runs =
        ensemble(s.config0, s.pot, s.sde, s.t_end, s.runs, &monitors, s.threads);
    detail::warn_confinement(monitors);

    double max_r = 0.0;
    long passes = 0, total = 0;
    std::string traj;
    if (s.dump_trajectories) traj = "run,time,index,position\n";
    for (int r = 0; r < s.runs; ++r) {
        const LocalLawReport rep =
            local_law_on_grid(runs[static_cast<std::size_t>(r)], grid, m_values, s.domain);
        max_r = std::max(max_r, rep.max_r);
        passes += static_cast<long>(rep.passes);
        total += static_cast<long>(rep.points);
        if (s.dump_trajectories)
            detail::dump_trajectory_csv(traj, r, runs[static_cast<std::size_t>(r)]);
    }
    const double pass_fraction = static_cast<double>(passes) / static_cast<double>(total);
    art.report["max_r"] = max_r;
    art.report["pass_fraction"] = pass_fraction;
    art.report["runs"] = s.runs;
    art.files.emplace_back("mesh.csv", detail::mesh_csv(hydro));
    if (s.dump_trajectories) art.files.emplace_back("trajectories.csv", traj);
    const double need = cfg.number_or("accept.pass_fraction_min", 0.0);
    if (pass_fraction < need) art.status = RunStatus::ThresholdFailure;
    return art;
}

inline RunArtifacts run_rigidity(const ExperimentSetup& s, const Config& cfg) {
    RunArtifacts art;
    HydroSolution hydro = s.make_hydro();
    hydro.advance_to(s.t_end);
    QuantileTable table;
    try {
        table = classical_locations(hydro, s.config0.n());
    } catch (const inversion_error&) {
        hydro.refine_mesh();  // retry once on a denser mesh
        table = classical_locations(hydro, s.config0.n());
    }

    std::vector<SdeMonitor> monitors;
    const std::vector<ParticleConfiguration> runs =
        ensemble(s.config0, s.pot, s.sde, s.t_end, s.runs, &monitors, s.threads);
    detail::warn_confinement(monitors);
    long violations = 0;
    long max_disp = 0;
    for (const auto& run : runs) {
        const RigidityReport rep = rigidity_report(run, table, s.domain);
        violations += rep.violations;
        if (std::abs(rep.max_displacement) > std::abs(max_disp)) max_disp = rep.max_displacement;
    }
    art.report["violations"] = violations;
    art.report["max_index_displacement"] = max_disp;
    art.report["runs"] = s.runs;
    std::string quant = "i,gamma\n";
    for (std::size_t i = 0; i < table.gamma.size(); ++i)
        quant += std::to_string(i + 1) + "," + io::format_double(table.gamma[i]) + "\n";
    art.files.emplace_back("quantiles.csv", quant);
    // smoothed density profile over the quantile window
    const double eta_probe = std::max(1e-4, 1.0 / (10.0 * s.config0.n()));
    const double e_lo = table.gamma.front(), e_hi = table.gamma.back();
    std::string prof = "E,density\n";
    for (int k = 0; k <= 200; ++k) {
        const double e = e_lo + (e_hi - e_lo) * k / 200.0;
        prof += io::format_double(e) + "," + io::format_double(density(hydro, e, eta_probe)) + "\n";
    }
    art.files.emplace_back("density.csv", prof);
    if (violations > cfg.integer_or("accept.max_violations", std::numeric_limits<long>::max()))
        art.status = RunStatus::ThresholdFailure;
    return art;
}

inline RunArtifacts run_clt(const ExperimentSetup& s, const Config& cfg) {
    RunArtifacts art;
    HydroSolution hydro = s.make_hydro();
    hydro.advance_to(s.t_end);

    const std::vector<double> pre = cfg.numbers_or("stats.probes_re", {0.0});
    const std::vector<double> pim = cfg.numbers_or("stats.probes_im", {0.005});
    if (pre.size() != pim.size())
        throw std::runtime_error("config: stats.probes_re / stats.probes_im length mismatch");
    std::vector<cplx> probes;
    for (std::size_t i = 0; i < pre.size(); ++i) probes.emplace_back(pre[i], pim[i]);

    ProbeGeometry geom = ProbeGeometry::from_params(
        s.domain, s.t_end, cfg.number_or("stats.e0", 0.0), cfg.number_or("stats.r", 0.5),
        cfg.number_or("stats.geom_lo_factor", 10.0), cfg.number_or("stats.geom_hi_factor", 10.0));
    geom.enforce = cfg.boolean_or("stats.geom_enforce", false);

    std::vector<cplx> m_values(probes.size());
    for (std::size_t j = 0; j < probes.size(); ++j) {
        geom.check(probes[j]);
        m_values[j] = hydro.evaluate_m(probes[j]);
    }

    std::vector<SdeMonitor> monitors;
    const std::vector<ParticleConfiguration> runs =
        ensemble(s.config0, s.pot, s.sde, s.t_end, s.runs, &monitors, s.threads);
    detail::warn_confinement(monitors);
    std::vector<FluctuationSample> samples;
    samples.reserve(runs.size());
    std::string fluct = "run,probe_re,probe_im,gamma_re,gamma_im\n";
    for (int r = 0; r < s.runs; ++r) {
        samples.push_back(
            gamma_field_values(runs[static_cast<std::size_t>(r)], probes, m_values, r));
        for (std::size_t j = 0; j < probes.size(); ++j) {
            fluct += std::to_string(r) + "," + io::format_double(probes[j].real()) + "," +
                     io::format_double(probes[j].imag()) + "," +
                     io::format_double(samples.back().gamma[j].real()) + "," +
                     io::format_double(samples.back().gamma[j].imag()) + "\n";
        }
    }
    const CltReport rep = clt_report(samples, s.config0.beta);
    art.report["runs"] = s.runs;
    art.report["cov_empirical"] = rep.cov_empirical;
    art.report["cov_predicted"] = rep.cov_predicted;
    art.report["cov_distance"] = rep.cov_distance;
    art.files.emplace_back("fluctuations.csv", fluct);
    if (rep.cov_distance > cfg.number_or("accept.cov_distance_max",
                                         std::numeric_limits<double>::infinity()))
        art.status = RunStatus::ThresholdFailure;
    return art;
}

inline RunArtifacts run_linstat(const ExperimentSetup& s, const Config& cfg) {
    RunArtifacts art;
    HydroSolution hydro = s.make_hydro();
    hydro.advance_to(s.t_end);

    LinearStatConfig lin;
    lin.eta = cfg.number_or("stats.lin_eta", 0.01);
    lin.E = cfg.number_or("stats.lin_e", 0.0);
    const std::string psi = cfg.str_or("stats.psi", "gaussian");
    lin.psi = psi == "bump" ? LinearStatConfig::Psi::Bump : LinearStatConfig::Psi::Gaussian;

    const double sigma2_pred = sigma_psi_squared(lin, s.config0.beta);

    std::vector<SdeMonitor> monitors;
    const std::vector<ParticleConfiguration> runs =
        ensemble(s.config0, s.pot, s.sde, s.t_end, s.runs, &monitors, s.threads);
    detail::warn_confinement(monitors);
    std::vector<double> stats;
    stats.reserve(runs.size());
    for (const auto& run : runs) stats.push_back(linear_statistic(run, hydro, lin));
    double mean = 0.0;
    for (double v : stats) mean += v;
    mean /= static_cast<double>(stats.size());
    double var = 0.0;
    for (double v : stats) var += (v - mean) * (v - mean);
    var /= static_cast<double>(stats.size() - 1);

    art.report["sigma2_predicted"] = sigma2_pred;
    art.report["sigma2_empirical"] = var;
    art.report["runs"] = s.runs;
    const double tol = cfg.number_or("accept.sigma2_rel_tol", 0.0);
    if (tol > 0.0 && std::abs(var - sigma2_pred) > tol * sigma2_pred)
        art.status = RunStatus::ThresholdFailure;
    return art;
}

inline RunArtifacts run_hydro_oracle(const ExperimentSetup& s, const Config& cfg) {
    RunArtifacts art;
    const std::string which = cfg.str_or("stats.oracle", s.pot.kind() == "zero" ? "free" : "quadratic");
    const double tol = cfg.number_or("accept.max_err", 1e-8);
    double max_err = 0.0;
    long failed_checks = 0;
    HydroParams hp = s.hydro;
    hp.mesh = MeshSpec{-1.0, 1.0, 21, 0.05, 1.5, 10};
    if (which == "quadratic") {
        HydroSolution sol(Potential::quadratic(s.pot.b_cut()), InitialTransform::atom(0.0), hp,
                          std::vector<double>(static_cast<std::size_t>(hp.n_mf), 0.0), s.threads);
        const cplx u{0.0, 1.0};
        const cplx m0 = -1.0 / u;
        for (int k = 0; k < 500; ++k) {
            sol.advance(1e-3);
            const double t = sol.t();
            const cplx z_ref = std::exp(-t / 2.0) * (u - m0 * (std::exp(t) - 1.0));
            const cplx m_ref = std::exp(t / 2.0) * m0;
            const auto flow = sol.flow_from(u);
            max_err = std::max({max_err, std::abs(flow.z - z_ref), std::abs(flow.m - m_ref)});
        }
        if (max_err > tol) ++failed_checks;
    } else if (which == "free") {
        HydroSolution sol(Potential::zero(s.pot.b_cut()), InitialTransform::atom(0.0), hp,
                          std::vector<double>(static_cast<std::size_t>(hp.n_mf), 0.0), s.threads);
        sol.advance_to(0.25);
        const cplx u{0.0, 1.0};
        const auto flow = sol.flow_from(u);
        const auto oracle = free_flow_oracle(u, 0.25, InitialTransform::atom(0.0));
        max_err = std::max(std::abs(flow.z - oracle.z), std::abs(flow.m - oracle.m));
        if (max_err > tol) ++failed_checks;
        // atom spreads to a semicircle of radius 2 sqrt(t); center density 1/(pi sqrt(t))
        const double rho0 = density(sol, 0.0, 1e-3);
        const double expect = 1.0 / (M_PI * std::sqrt(0.25));
        if (std::abs(rho0 - expect) > 0.02 * expect) ++failed_checks;
    } else {
        throw std::runtime_error("config: unknown stats.oracle " + which);
    }
    art.report["max_r"] = max_err;
    art.report["violations"] = failed_checks;
    art.report["runs"] = 1;
    if (failed_checks > 0) art.status = RunStatus::ThresholdFailure;
    return art;
}

// Parses, runs and writes artifacts. Identical config and seed produce
// byte-identical outputs regardless of the thread count.
inline RunStatus run_experiment(const Config& cfg, const std::string& out_dir, int threads = 0) {
    const ExperimentSetup setup = ExperimentSetup::from_config(cfg, threads);
    RunArtifacts art;
    if (setup.experiment == "locallaw")
        art = run_locallaw(setup, cfg);
    else if (setup.experiment == "rigidity")
        art = run_rigidity(setup, cfg);
    else if (setup.experiment == "clt")
        art = run_clt(setup, cfg);
    else if (setup.experiment == "linstat")
        art = run_linstat(setup, cfg);
    else if (setup.experiment == "hydro-oracle")
        art = run_hydro_oracle(setup, cfg);
    else
        throw std::runtime_error("config: unknown experiment " + setup.experiment);

    std::filesystem::create_directories(out_dir);
    io::write_text(std::filesystem::path(out_dir) / "report.json", art.report.dump(2) + "\n");
    for (const auto& [name, contents] : art.files)
        io::write_text(std::filesystem::path(out_dir) / name, contents);
    return art.status;
}

}  // namespace dbm
