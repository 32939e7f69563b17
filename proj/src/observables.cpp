#include "moire/observables.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "moire/util.hpp"

namespace moire {

using json = nlohmann::json;

std::vector<Vector2d> KPath::points() const
{
    if (vertices.size() < 2) throw std::invalid_argument("KPath: need at least two vertices");
    for (size_t i = 0; i + 1 < vertices.size(); ++i) {
        if ((vertices[i + 1] - vertices[i]).norm() < 1e-12) {
            throw std::invalid_argument("KPath: consecutive vertices coincide");
        }
    }
    std::vector<Vector2d> pts;
    const int pps = std::max(1, points_per_segment);
    for (size_t i = 0; i + 1 < vertices.size(); ++i) {
        for (int j = 0; j < pps; ++j) {
            double t = static_cast<double>(j) / pps;
            pts.push_back(vertices[i] + t * (vertices[i + 1] - vertices[i]));
        }
    }
    pts.push_back(vertices.back());
    return pts;
}

std::vector<double> KPath::distances() const
{
    std::vector<Vector2d> pts = points();
    std::vector<double> d(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) {
        d[i] = d[i - 1] + (pts[i] - pts[i - 1]).norm();
    }
    return d;
}

std::vector<double> KPath::vertex_distances() const
{
    std::vector<double> d(vertices.size(), 0.0);
    for (size_t i = 1; i < vertices.size(); ++i) {
        d[i] = d[i - 1] + (vertices[i] - vertices[i - 1]).norm();
    }
    return d;
}

KPath default_path(const BilayerGeometry& geom, int valley_sign, int points_per_segment)
{
    const double sgn = valley_sign >= 0 ? 1.0 : -1.0;
    const Vector2d k1 = sgn * dirac_momentum(geom.layer1);
    const Vector2d k2 = sgn * dirac_momentum(geom.layer2);
    const Vector2d mid = 0.5 * (k1 + k2);
    const Vector2d edge = k2 - k1;
    const Vector2d perp(-edge.y(), edge.x());
    const Vector2d gamma_m = mid + 0.5 * std::sqrt(3.0) * perp;

    KPath path;
    path.names = {"K_M", "Gamma_M", "M_M", "K'_M"};
    path.vertices = {k1, gamma_m, mid, k2};
    path.points_per_segment = points_per_segment;
    return path;
}

BandStructure bands(const Engine& engine, const KPath& path)
{
    BandStructure bs;
    bs.k = path.points();
    bs.s = path.distances();
    const int nk = static_cast<int>(bs.k.size());
    bs.energies.resize(nk, engine.basis.size());
    // parallel over k-points; inner assembly stays single-threaded
    parallel_for(nk, engine.threads, [&](int i) {
        KHamiltonian kh = assemble(bs.k[i], engine.basis, engine.table1, engine.table2,
                                   engine.coupling, engine.inter_scale, 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(kh.matrix, Eigen::EigenvaluesOnly);
        bs.energies.row(i) = solver.eigenvalues().transpose();
    });
    return bs;
}

void save_bands(const BandStructure& bs, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write band file: " + path);
    out.precision(12);
    out << "s,kx,ky";
    for (int b = 0; b < bs.energies.cols(); ++b) out << ",e" << (b + 1);
    out << "\n";
    for (size_t i = 0; i < bs.k.size(); ++i) {
        out << bs.s[i] << "," << bs.k[i].x() << "," << bs.k[i].y();
        for (int b = 0; b < bs.energies.cols(); ++b) out << "," << bs.energies(i, b);
        out << "\n";
    }
}

static double gaussian(double x, double eps)
{
    const double z = x / eps;
    return std::exp(-0.5 * z * z) / (eps * std::sqrt(2.0 * M_PI));
}

DosCurve dos(const std::vector<const Engine*>& engines, const DosOptions& opts,
             int reported_valleys)
{
    if (engines.empty()) throw std::invalid_argument("dos: no engines");
    if (opts.epsilon <= 0.0) throw std::invalid_argument("dos: epsilon must be positive");
    if (opts.nq < 1) throw std::invalid_argument("dos: nq must be >= 1");

    DosCurve curve;
    curve.epsilon = opts.epsilon;
    curve.nq = opts.nq;
    curve.valleys = reported_valleys > 0 ? reported_valleys : static_cast<int>(engines.size());

    // eigenvalues per engine, per grid node
    const int nq = opts.nq;
    std::vector<std::vector<Eigen::VectorXd>> eigs(engines.size());
    for (size_t v = 0; v < engines.size(); ++v) {
        const Engine& eng = *engines[v];
        const Matrix2d theta = eng.geom.theta_matrix;
        eigs[v].resize(static_cast<size_t>(nq) * nq);
        parallel_for(nq * nq, eng.threads, [&](int idx) {
            const int i = idx / nq, j = idx % nq;
            Vector2d q = eng.valley() +
                         theta * Vector2d(static_cast<double>(i) / nq, static_cast<double>(j) / nq);
            KHamiltonian kh = assemble(q, eng.basis, eng.table1, eng.table2, eng.coupling,
                                       eng.inter_scale, 1);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(kh.matrix,
                                                                   Eigen::EigenvaluesOnly);
            eigs[v][idx] = solver.eigenvalues();
        });
    }

    double emin = opts.emin, emax = opts.emax;
    if (emin == 0.0 && emax == 0.0) {
        emin = std::numeric_limits<double>::max();
        emax = std::numeric_limits<double>::lowest();
        for (const auto& per_engine : eigs) {
            for (const auto& e : per_engine) {
                emin = std::min(emin, e.minCoeff());
                emax = std::max(emax, e.maxCoeff());
            }
        }
        emin -= 10.0 * opts.epsilon;
        emax += 10.0 * opts.epsilon;
    }
    if (emax <= emin) throw std::invalid_argument("dos: empty energy window");

    // quadrature-resolution estimate: largest per-band jump between
    // neighboring grid nodes
    double jump = 0.0;
    for (const auto& per_engine : eigs) {
        for (int i = 0; i < nq; ++i) {
            for (int j = 0; j < nq; ++j) {
                const auto& a = per_engine[static_cast<size_t>(i) * nq + j];
                const auto& b = per_engine[static_cast<size_t>(i) * nq + (j + 1) % nq];
                jump = std::max(jump, (a - b).cwiseAbs().maxCoeff());
            }
        }
    }
    curve.noise_estimate = jump;
    if (opts.epsilon < jump) {
        curve.warning = "epsilon below the eigenvalue resolution of the q-grid; "
                        "increase Nq or epsilon";
    }

    const int ne = std::max(2, opts.n_energies);
    curve.energies.resize(ne);
    curve.dos.assign(ne, 0.0);
    for (int i = 0; i < ne; ++i) {
        curve.energies[i] = emin + (emax - emin) * i / (ne - 1);
    }
    for (size_t v = 0; v < engines.size(); ++v) {
        const double dim = static_cast<double>(engines[v]->basis.size());
        const double w = 1.0 / (static_cast<double>(engines.size()) * dim * nq * nq);
        for (const auto& e : eigs[v]) {
            for (int b = 0; b < e.size(); ++b) {
                for (int i = 0; i < ne; ++i) {
                    curve.dos[i] += w * gaussian(curve.energies[i] - e(b), opts.epsilon);
                }
            }
        }
    }
    return curve;
}

void save_dos(const DosCurve& curve, const std::string& path)
{
    json j;
    j["energies"] = curve.energies;
    j["dos"] = curve.dos;
    j["epsilon"] = curve.epsilon;
    j["Nq"] = curve.nq;
    j["valleys"] = curve.valleys;
    j["noise_estimate"] = curve.noise_estimate;
    if (!curve.warning.empty()) j["warning"] = curve.warning;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write DOS file: " + path);
    out << j.dump(2) << "\n";
}

// Gamma-point metric: the eigenvalue pair bracketing zero, in ascending
// order. Comparing the pair per index is stable when the two near-zero
// branches cross as a truncation parameter varies, unlike tracking the
// single smallest-|E| eigenvalue.
static Eigen::Vector2d zero_bracket_pair(const Eigen::MatrixXcd& h)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h, Eigen::EigenvaluesOnly);
    const auto& e = solver.eigenvalues();
    int i0 = 0;
    while (i0 < e.size() && e(i0) < 0.0) ++i0;
    if (i0 == 0) i0 = 1;
    if (i0 == e.size()) i0 = static_cast<int>(e.size()) - 1;
    return {e(i0 - 1), e(i0)};
}

static SweepFit fit_sweep(const std::vector<double>& x, const std::vector<double>& err)
{
    SweepFit fit;
    fit.x = x;
    fit.error = err;
    for (size_t i = 1; i < err.size(); ++i) {
        if (err[i] > err[i - 1] * (1.0 + 1e-12)) {
            fit.monotone = false;
            fit.note = "non-monotone error sequence (mesh residual symptom)";
        }
    }
    std::vector<double> xs, ys;
    for (size_t i = 0; i < err.size(); ++i) {
        if (err[i] > 0.0) {
            xs.push_back(x[i]);
            ys.push_back(std::log(err[i]));
        }
    }
    if (xs.size() < 3) {
        fit.note = fit.note.empty() ? "too few nonzero points for a fit" : fit.note;
        return fit;
    }
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
        syy += ys[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-14) {
        fit.note = "degenerate sweep (constant parameter)";
        return fit;
    }
    const double slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - slope * sx) / n;
    fit.slope = -slope;  // error ~ exp(-gamma x)
    double ss_res = 0, ss_tot = 0;
    const double ymean = sy / n;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double pred = slope * xs[i] + fit.intercept;
        ss_res += (ys[i] - pred) * (ys[i] - pred);
        ss_tot += (ys[i] - ymean) * (ys[i] - ymean);
    }
    fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
    fit.ok = fit.r2 >= 0.9;
    if (!fit.ok && fit.note.empty()) fit.note = "fit rejected: R^2 < 0.9";
    return fit;
}

ConvergenceReport gamma_convergence(const BilayerGeometry& geom, const HoppingModel& model,
                                    const DisplacementField* u,
                                    const std::vector<double>& lambdas,
                                    const std::vector<double>& taus, const EngineOptions& base)
{
    if (lambdas.size() < 5 || taus.size() < 5) {
        throw std::invalid_argument("gamma_convergence: sweeps need at least 5 points");
    }
    std::vector<double> ls = lambdas, ts = taus;
    std::sort(ls.begin(), ls.end());
    std::sort(ts.begin(), ts.end());

    EngineOptions opts = base;
    opts.lambda = ls.back();
    opts.tau = ts.back();
    Engine engine = build_engine(geom, model, u, opts);

    ConvergenceReport report;
    report.theta = geom.twist_angle;
    report.relaxed = (u != nullptr && !u->empty());

    const Vector2d gamma_m = default_path(geom, base.valley_sign).vertices[1];
    auto gamma_pair = [&](const MomentumBasis& basis, const SampledInterlayerCoupling& c) {
        KHamiltonian kh = assemble(gamma_m, basis, engine.table1, engine.table2, c,
                                   engine.inter_scale, engine.threads);
        return zero_bracket_pair(kh.matrix);
    };
    const Eigen::Vector2d ref_pair = gamma_pair(engine.basis, engine.coupling);
    report.reference_energy =
        std::abs(ref_pair(0)) < std::abs(ref_pair(1)) ? ref_pair(0) : ref_pair(1);
    const double scale = std::max(ref_pair.cwiseAbs().maxCoeff(), 1e-3);

    std::vector<double> lx, lerr;
    for (size_t i = 0; i + 1 < ls.size(); ++i) {
        MomentumBasis b = build_basis(geom, ls[i], engine.basis.valley);
        lx.push_back(ls[i]);
        lerr.push_back((gamma_pair(b, engine.coupling) - ref_pair).cwiseAbs().maxCoeff() / scale);
    }
    report.lambda_fit = fit_sweep(lx, lerr);

    std::vector<double> tx, terr;
    for (size_t i = 0; i + 1 < ts.size(); ++i) {
        SampledInterlayerCoupling c = retruncate(engine.coupling, ts[i]);
        tx.push_back(ts[i]);
        terr.push_back((gamma_pair(engine.basis, c) - ref_pair).cwiseAbs().maxCoeff() / scale);
    }
    report.tau_fit = fit_sweep(tx, terr);
    return report;
}

static json sweep_json(const SweepFit& fit)
{
    json j;
    j["x"] = fit.x;
    j["error"] = fit.error;
    j["gamma"] = fit.slope;
    j["intercept"] = fit.intercept;
    j["r2"] = fit.r2;
    j["ok"] = fit.ok;
    j["monotone"] = fit.monotone;
    if (!fit.note.empty()) j["note"] = fit.note;
    return j;
}

void save_convergence(const ConvergenceReport& report, const std::string& path)
{
    json j;
    j["theta_rad"] = report.theta;
    j["theta_deg"] = report.theta * 180.0 / M_PI;
    j["relaxed"] = report.relaxed;
    j["reference_energy_eV"] = report.reference_energy;
    j["lambda_sweep"] = sweep_json(report.lambda_fit);
    j["tau_sweep"] = sweep_json(report.tau_fit);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write convergence report: " + path);
    out << j.dump(2) << "\n";
}

double dos_l1_distance(const DosCurve& a, const DosCurve& b)
{
    auto interp = [&](double e) -> double {
        const auto& xs = b.energies;
        if (e <= xs.front() || e >= xs.back()) return 0.0;
        auto it = std::upper_bound(xs.begin(), xs.end(), e);
        size_t i = static_cast<size_t>(it - xs.begin());
        const double t = (e - xs[i - 1]) / (xs[i] - xs[i - 1]);
        return (1.0 - t) * b.dos[i - 1] + t * b.dos[i];
    };
    double total = 0.0;
    for (size_t i = 1; i < a.energies.size(); ++i) {
        const double de = a.energies[i] - a.energies[i - 1];
        const double f0 = std::abs(a.dos[i - 1] - interp(a.energies[i - 1]));
        const double f1 = std::abs(a.dos[i] - interp(a.energies[i]));
        total += 0.5 * (f0 + f1) * de;
    }
    return total;
}

}  // namespace moire
