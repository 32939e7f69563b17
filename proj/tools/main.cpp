#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "moire/hamiltonian.hpp"
#include "moire/observables.hpp"
#include "moire/relaxation.hpp"
#include "moire/run_config.hpp"
#include "moire/supercell.hpp"
#include "moire/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace moire;

namespace {

struct CliState {
    std::string config_path;
    int threads = 1;
    std::string output_dir;
    std::string cache_dir;
    bool print_config = false;

    RunConfig config;
    std::vector<std::pair<std::string, double>> timings;
    std::vector<ManifestEntry> outputs;
    std::chrono::steady_clock::time_point stage_start;
};

void add_common(CLI::App* cmd, CliState& st)
{
    cmd->add_option("--config", st.config_path, "JSON run configuration")->required();
    cmd->add_option("--threads", st.threads, "worker threads (does not affect results)");
    cmd->add_option("--output-dir", st.output_dir, "overrides output_dir from the config");
    cmd->add_option("--cache-dir", st.cache_dir, "directory for sampled-coupling caches");
    cmd->add_flag("--print-config", st.print_config,
                  "print the effective config (all defaults filled) and exit");
}

/// Loads config and applies flag overrides; prints-and-exits under
/// --print-config (signalled by returning false).
bool setup(CliState& st)
{
    st.config = load_run_config(st.config_path);
    if (!st.output_dir.empty()) st.config.output_dir = st.output_dir;
    if (st.threads < 1) st.threads = 1;
    if (st.print_config) {
        std::cout << config_dump(st.config);
        return false;
    }
    fs::create_directories(st.config.output_dir);
    st.stage_start = std::chrono::steady_clock::now();
    return true;
}

void stage_done(CliState& st, const std::string& name)
{
    auto now = std::chrono::steady_clock::now();
    st.timings.push_back({name, std::chrono::duration<double>(now - st.stage_start).count()});
    st.stage_start = now;
}

void record_output(CliState& st, const std::string& filename)
{
    st.outputs.push_back({filename, file_hash(st.config.output_dir + "/" + filename)});
}

void finish(CliState& st, const std::string& subcommand)
{
    write_manifest(st.config.output_dir, subcommand, st.config, st.timings, st.outputs);
}

HoppingModel load_model(const RunConfig& c)
{
    if (c.model_path.empty()) return nn_only_preset();
    try {
        return load_hopping_model(c.model_path);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("config: model — ") + e.what());
    }
}

RelaxResult solve_relaxation(const RunConfig& c, const BilayerGeometry& geom)
{
    GsfeModel gsfe = GsfeModel::first_star(c.gsfe_c0, c.gsfe_c1);
    ElasticityTensor elast{c.bulk_K, c.shear_G};
    RelaxOptions opts;
    opts.gmax = c.relax_gmax;
    opts.grid_n = c.relax_grid;
    opts.grad_tol = c.relax_tol;
    opts.max_iter = c.relax_max_iter;
    return relax(gsfe, elast, geom, opts);
}

/// Displacement per the config: none, loaded, or freshly minimized.
std::optional<DisplacementField> get_displacement(const RunConfig& c, const BilayerGeometry& geom)
{
    if (!c.relax_enabled) return std::nullopt;
    if (!c.displacement_path.empty()) {
        try {
            return load_displacement(c.displacement_path);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("config: relaxation.displacement_file — ") +
                                     e.what());
        }
    }
    RelaxResult result = solve_relaxation(c, geom);
    if (!result.converged) {
        std::cerr << "warning: relaxation stopped at gradient norm " << result.grad_norm << "\n";
    }
    return result.u;
}

std::string coupling_cache_key(const CliState& st, const BilayerGeometry& geom,
                               const DisplacementField* u, double tau, double lambda,
                               int valley_sign)
{
    std::ostringstream ss;
    ss.precision(17);
    ss << kVersion << "|" << st.config.a << "|" << st.config.theta_deg << "|"
       << (st.config.convention == RotationConvention::Symmetric ? "sym" : "one") << "|" << tau
       << "|" << lambda
       << "|" << st.config.mesh.spacing << "|" << st.config.mesh.extent << "|" << valley_sign
       << "|" << (u && !u->empty() ? 1 : 0);
    if (!st.config.model_path.empty()) {
        ss << "|" << file_hash(st.config.model_path);
    } else {
        ss << "|preset";
    }
    if (u && !u->empty()) {
        for (const auto& coeff : u->coeffs) {
            ss << "|" << coeff.x().real() << "," << coeff.x().imag() << "," << coeff.y().real()
               << "," << coeff.y().imag();
        }
    }
    (void)geom;
    return to_hex(fnv1a(ss.str()));
}

EngineOptions engine_options(const CliState& st, int valley_sign)
{
    EngineOptions opts;
    opts.lambda = st.config.lambda;
    opts.tau = st.config.tau;
    opts.gcut = st.config.gcut;
    opts.grid_n = st.config.grid_n;
    opts.mesh = st.config.mesh;
    opts.valley_sign = valley_sign;
    opts.threads = st.threads;
    return opts;
}

Engine cached_engine(CliState& st, const BilayerGeometry& geom, const HoppingModel& model,
                     const DisplacementField* u, int valley_sign)
{
    EngineOptions opts = engine_options(st, valley_sign);
    const double tau = opts.tau > 0.0 ? opts.tau : default_tau(geom);
    const double lambda = opts.lambda > 0.0 ? opts.lambda : default_lambda(geom);
    std::string cache_path;
    if (!st.cache_dir.empty()) {
        fs::create_directories(st.cache_dir);
        cache_path = st.cache_dir + "/coupling-" +
                     coupling_cache_key(st, geom, u, tau, lambda, valley_sign) + ".json";
        if (fs::exists(cache_path)) {
            SampledInterlayerCoupling cached = load_coupling_cache(cache_path);
            if (std::abs(cached.tau - tau) < 1e-12 &&
                cached.coverage >= lambda + 2.0 * geom.moire_g_length() &&
                cached.relaxed == (u != nullptr && !u->empty())) {
                return build_engine(geom, model, u, opts, &cached);
            }
            std::cerr << "warning: ignoring stale coupling cache " << cache_path << "\n";
        }
    }
    Engine engine = build_engine(geom, model, u, opts);
    if (!cache_path.empty()) save_coupling_cache(engine.coupling, cache_path);
    return engine;
}

int cmd_relax(CliState& st)
{
    if (!setup(st)) return 0;
    if (!st.config.relax_enabled) {
        throw std::runtime_error("config: relaxation.enabled must be true for `relax`");
    }
    BilayerGeometry geom = config_geometry(st.config);
    RelaxResult result = solve_relaxation(st.config, geom);
    stage_done(st, "relax");

    save_displacement(result.u, st.config.output_dir + "/displacement.json");
    record_output(st, "displacement.json");
    json report;
    report["converged"] = result.converged;
    report["iterations"] = result.iterations;
    report["grad_norm"] = result.grad_norm;
    report["energy_trace_eV_A2"] = result.energy_trace;
    report["u_max_A"] = result.u.max_norm();
    {
        std::ofstream out(st.config.output_dir + "/relax_report.json");
        out << report.dump(2) << "\n";
    }
    record_output(st, "relax_report.json");
    stage_done(st, "write");
    finish(st, "relax");
    std::cout << "relaxation " << (result.converged ? "converged" : "did not converge") << " in "
              << result.iterations << " iterations, max |u| = " << result.u.max_norm() << " A\n";
    return 0;
}

int cmd_bands(CliState& st)
{
    if (!setup(st)) return 0;
    BilayerGeometry geom = config_geometry(st.config);
    HoppingModel model = load_model(st.config);
    auto u = get_displacement(st.config, geom);
    stage_done(st, "setup");

    Engine engine = cached_engine(st, geom, model, u ? &*u : nullptr, +1);
    stage_done(st, "engine");

    KPath path = default_path(geom, +1, st.config.points_per_segment);
    BandStructure bs = bands(engine, path);
    stage_done(st, "bands");

    save_bands(bs, st.config.output_dir + "/bands.csv");
    record_output(st, "bands.csv");
    json meta;
    meta["vertex_names"] = path.names;
    meta["vertex_distances"] = path.vertex_distances();
    meta["basis_size"] = engine.basis.size();
    {
        std::ofstream out(st.config.output_dir + "/bands_meta.json");
        out << meta.dump(2) << "\n";
    }
    record_output(st, "bands_meta.json");
    stage_done(st, "write");
    finish(st, "bands");
    std::cout << "bands: " << bs.k.size() << " k-points, " << engine.basis.size() << " bands\n";
    return 0;
}

int cmd_dos(CliState& st)
{
    if (!setup(st)) return 0;
    BilayerGeometry geom = config_geometry(st.config);
    HoppingModel model = load_model(st.config);
    auto u = get_displacement(st.config, geom);
    stage_done(st, "setup");

    std::vector<Engine> engines;
    engines.push_back(cached_engine(st, geom, model, u ? &*u : nullptr, +1));
    if (st.config.valleys == 2) {
        engines.push_back(cached_engine(st, geom, model, u ? &*u : nullptr, -1));
    }
    stage_done(st, "engine");

    DosOptions opts;
    opts.emin = st.config.dos_emin;
    opts.emax = st.config.dos_emax;
    opts.n_energies = st.config.dos_energies;
    opts.epsilon = st.config.epsilon;
    opts.nq = st.config.nq;
    std::vector<const Engine*> ptrs;
    for (const auto& e : engines) ptrs.push_back(&e);
    DosCurve curve = dos(ptrs, opts, st.config.valleys);
    if (!curve.warning.empty()) std::cerr << "warning: " << curve.warning << "\n";
    stage_done(st, "dos");

    save_dos(curve, st.config.output_dir + "/dos.json");
    record_output(st, "dos.json");
    stage_done(st, "write");
    finish(st, "dos");
    std::cout << "dos: " << curve.energies.size() << " energies, Nq = " << curve.nq << ", valleys = "
              << curve.valleys << "\n";
    return 0;
}

int cmd_converge(CliState& st)
{
    if (!setup(st)) return 0;
    BilayerGeometry geom = config_geometry(st.config);
    HoppingModel model = load_model(st.config);
    auto u = get_displacement(st.config, geom);
    stage_done(st, "setup");

    std::vector<double> lambdas = st.config.lambda_sweep;
    std::vector<double> taus = st.config.tau_sweep;
    if (lambdas.empty()) {
        const double lmax = default_lambda(geom);
        for (double f : {0.35, 0.48, 0.61, 0.74, 0.87, 1.0}) lambdas.push_back(f * lmax);
    }
    if (taus.empty()) {
        const double tmax = default_tau(geom);
        for (double f : {0.5, 0.6, 0.7, 0.8, 0.9, 1.0}) taus.push_back(f * tmax);
    }
    EngineOptions base = engine_options(st, +1);
    ConvergenceReport report =
        gamma_convergence(geom, model, u ? &*u : nullptr, lambdas, taus, base);
    stage_done(st, "sweeps");

    save_convergence(report, st.config.output_dir + "/convergence.json");
    record_output(st, "convergence.json");
    stage_done(st, "write");
    finish(st, "converge");
    std::cout << "converge: gamma_lambda = " << report.lambda_fit.slope
              << " (r2 " << report.lambda_fit.r2 << "), gamma_tau = " << report.tau_fit.slope
              << " (r2 " << report.tau_fit.r2 << ")\n";
    return 0;
}

int cmd_validate(CliState& st)
{
    if (!setup(st)) return 0;
    HoppingModel model = load_model(st.config);
    CommensurateCell cell =
        commensurate_supercell(st.config.comm_m, st.config.comm_n, make_graphene(st.config.a));
    auto u = get_displacement(st.config, cell.geom);
    stage_done(st, "setup");

    SupercellHamiltonian oracle = build_supercell(cell, model, u ? &*u : nullptr);
    Engine engine = cached_engine(st, cell.geom, model, u ? &*u : nullptr, +1);
    stage_done(st, "build");

    KPath path = default_path(cell.geom, +1, std::max(1, st.config.validate_k - 1));
    std::vector<Vector2d> pts = path.points();
    const int nk = std::max(1, st.config.validate_k);
    json per_k = json::array();
    double overall = 0.0;
    for (int i = 0; i < nk; ++i) {
        const Vector2d k = pts[std::min(pts.size() - 1, i * pts.size() / nk)];
        Eigen::VectorXd ev_oracle = supercell_eigenvalues(oracle, k);
        Eigen::VectorXd ev_kspace = eigenvalues_at(engine, k);
        SpectraComparison cmp = compare_spectra(ev_oracle, ev_kspace, st.config.window);
        overall = std::max(overall, cmp.max_deviation);
        json entry;
        entry["k"] = {k.x(), k.y()};
        entry["max_deviation_eV"] = cmp.max_deviation;
        entry["bands_compared"] = cmp.bands_compared;
        entry["count_oracle"] = cmp.count_a;
        entry["count_kspace"] = cmp.count_b;
        if (!cmp.note.empty()) entry["note"] = cmp.note;
        per_k.push_back(entry);
    }
    stage_done(st, "compare");

    json report;
    report["m"] = st.config.comm_m;
    report["n"] = st.config.comm_n;
    report["theta_deg"] = cell.geom.twist_angle * 180.0 / M_PI;
    report["atoms"] = cell.atom_count;
    report["window_eV"] = st.config.window;
    report["relaxed"] = st.config.relax_enabled;
    report["max_deviation_eV"] = overall;
    report["k_points"] = per_k;
    {
        std::ofstream out(st.config.output_dir + "/validation.json");
        out << report.dump(2) << "\n";
    }
    record_output(st, "validation.json");
    stage_done(st, "write");
    finish(st, "validate");
    std::cout << "validate: theta = " << cell.geom.twist_angle * 180.0 / M_PI << " deg, "
              << cell.atom_count << " atoms, max deviation " << overall << " eV\n";
    return 0;
}

int cmd_sample_cache(CliState& st)
{
    if (!setup(st)) return 0;
    if (st.cache_dir.empty()) {
        throw std::runtime_error("config: `sample-cache` requires --cache-dir");
    }
    BilayerGeometry geom = config_geometry(st.config);
    HoppingModel model = load_model(st.config);
    auto u = get_displacement(st.config, geom);
    stage_done(st, "setup");

    Engine engine = cached_engine(st, geom, model, u ? &*u : nullptr, +1);
    stage_done(st, "sample");
    finish(st, "sample-cache");
    std::cout << "sample-cache: " << engine.coupling.samples.size() << " samples at tau = "
              << engine.coupling.tau << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"momentum-space band structures of twisted incommensurate bilayers"};
    app.require_subcommand(1);

    CliState st;
    auto* relax_cmd = app.add_subcommand("relax", "solve the mechanical relaxation field");
    auto* bands_cmd = app.add_subcommand("bands", "band structure along the moire BZ path");
    auto* dos_cmd = app.add_subcommand("dos", "Gaussian-smeared density of states");
    auto* conv_cmd = app.add_subcommand("converge", "Gamma-point truncation convergence study");
    auto* val_cmd = app.add_subcommand("validate", "compare against the commensurate supercell");
    auto* cache_cmd = app.add_subcommand("sample-cache", "precompute the interlayer coupling cache");
    for (auto* cmd : {relax_cmd, bands_cmd, dos_cmd, conv_cmd, val_cmd, cache_cmd}) {
        add_common(cmd, st);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (relax_cmd->parsed()) return cmd_relax(st);
        if (bands_cmd->parsed()) return cmd_bands(st);
        if (dos_cmd->parsed()) return cmd_dos(st);
        if (conv_cmd->parsed()) return cmd_converge(st);
        if (val_cmd->parsed()) return cmd_validate(st);
        if (cache_cmd->parsed()) return cmd_sample_cache(st);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return std::string(e.what()).rfind("config:", 0) == 0 ? 2 : 1;
    }
    return 1;
}
