#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "moire/observables.hpp"
#include "test_helpers.hpp"

using namespace moire;
using moire::testing::twisted_graphene;

namespace {

const Engine& engine3()
{
    static Engine e = [] {
        BilayerGeometry geom = twisted_graphene(3.0);
        EngineOptions opts;
        opts.lambda = 3.0 * geom.moire_g_length();
        opts.tau = 4.0;
        opts.threads = 2;
        return build_engine(geom, nn_only_preset(), nullptr, opts);
    }();
    return e;
}

double trapz(const std::vector<double>& x, const std::vector<double>& y)
{
    double total = 0.0;
    for (size_t i = 1; i < x.size(); ++i) {
        total += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    }
    return total;
}

}  // namespace

TEST_CASE("default k-path geometry: vertices, sampling and arc length")
{
    BilayerGeometry geom = twisted_graphene(2.0);
    KPath path = default_path(geom, +1, 7);
    REQUIRE(path.vertices.size() == 4);
    CHECK(path.names.front() == "K_M");
    CHECK((path.vertices.front() - dirac_momentum(geom.layer1)).norm() < 1e-12);
    CHECK((path.vertices.back() - dirac_momentum(geom.layer2)).norm() < 1e-12);
    // the moire Dirac points sit one moire reciprocal length apart (hexagon edge)
    const double edge = (path.vertices.back() - path.vertices.front()).norm();
    CHECK(edge == doctest::Approx(geom.moire_g_length() / std::sqrt(3.0)).epsilon(1e-9));

    std::vector<Vector2d> pts = path.points();
    CHECK(pts.size() == 3 * 7 + 1);
    std::vector<double> d = path.distances();
    for (size_t i = 1; i < d.size(); ++i) CHECK(d[i] > d[i - 1]);
    CHECK(path.vertex_distances().back() == doctest::Approx(d.back()).epsilon(1e-12));

    // opposite valley is the inversion image
    KPath minus = default_path(geom, -1, 7);
    CHECK((minus.vertices[1] + path.vertices[1]).norm() < 1e-12);

    KPath bad;
    bad.vertices = {Vector2d::Zero()};
    CHECK_THROWS(bad.points());
}

TEST_CASE("band structure: shape, sorted rows, Weyl-bounded continuity")
{
    const Engine& e = engine3();
    KPath path = default_path(e.geom, +1, 6);
    BandStructure bs = bands(e, path);
    REQUIRE(bs.energies.rows() == static_cast<long>(bs.k.size()));
    CHECK(bs.energies.cols() == e.basis.size());
    for (long i = 0; i < bs.energies.rows(); ++i) {
        for (long b = 1; b < bs.energies.cols(); ++b) {
            CHECK(bs.energies(i, b) >= bs.energies(i, b - 1));
        }
    }
    // eigenvalue motion between neighbors is bounded by the Hamiltonian change
    for (size_t i = 1; i < bs.k.size(); ++i) {
        Eigen::MatrixXcd dh = hamiltonian_at(e, bs.k[i]).matrix -
                              hamiltonian_at(e, bs.k[i - 1]).matrix;
        const double bound = dh.norm();  // Frobenius >= spectral
        const double jump =
            (bs.energies.row(i) - bs.energies.row(i - 1)).cwiseAbs().maxCoeff();
        CHECK(jump <= bound + 1e-12);
    }
}

TEST_CASE("moire Dirac point survives with a reduced velocity")
{
    const Engine& e = engine3();
    const Vector2d km = default_path(e.geom, +1).vertices[0];
    Eigen::VectorXd eig = eigenvalues_at(e, km);
    // two smallest-|E| levels are the (near-degenerate) Dirac pair
    std::vector<double> mags(eig.data(), eig.data() + eig.size());
    std::sort(mags.begin(), mags.end(), [](double a, double b) {
        return std::abs(a) < std::abs(b);
    });
    CHECK(std::abs(mags[1] - mags[0]) < 5e-4);

    const Vector2d gm = default_path(e.geom, +1).vertices[1];
    const Vector2d dir = (gm - km).normalized();
    const double h = 1e-3 * e.geom.moire_g_length();
    Eigen::VectorXd shifted = eigenvalues_at(e, km + h * dir);
    std::vector<double> m2(shifted.data(), shifted.data() + shifted.size());
    std::sort(m2.begin(), m2.end(), [](double a, double b) {
        return std::abs(a) < std::abs(b);
    });
    const double v = 0.5 * (std::abs(m2[1] - m2[0]) - std::abs(mags[1] - mags[0])) / h;
    const double v_mono = std::sqrt(3.0) / 2.0 * 2.46 * 2.7;
    CHECK(v > 0.3 * v_mono);
    CHECK(v < 0.98 * v_mono);
}

TEST_CASE("single-point DOS equals the explicit Gaussian sum")
{
    const Engine& e = engine3();
    DosOptions opts;
    opts.nq = 1;
    opts.epsilon = 0.1;
    opts.emin = -10.0;
    opts.emax = 10.0;
    opts.n_energies = 201;
    DosCurve curve = dos({&e}, opts);

    Eigen::VectorXd eig = eigenvalues_at(e, e.valley());
    for (size_t i = 0; i < curve.energies.size(); ++i) {
        double expect = 0.0;
        for (int b = 0; b < eig.size(); ++b) {
            const double z = (curve.energies[i] - eig(b)) / opts.epsilon;
            expect += std::exp(-0.5 * z * z) / (opts.epsilon * std::sqrt(2.0 * M_PI));
        }
        expect /= static_cast<double>(eig.size());
        CHECK(curve.dos[i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("DOS normalizes to one over the auto window")
{
    const Engine& e = engine3();
    DosOptions opts;
    opts.nq = 4;
    // the noise estimate includes the grid wraparound pair, whose jump is
    // set by the truncation non-periodicity rather than the grid spacing,
    // so the smearing has to sit above that scale to stay warning-free
    opts.epsilon = 0.6;
    opts.n_energies = 1201;
    DosCurve curve = dos({&e}, opts, 2);
    CHECK(curve.valleys == 2);
    CHECK(trapz(curve.energies, curve.dos) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(curve.warning.empty());
}

TEST_CASE("the two valleys give identical DOS curves")
{
    const Engine& ep = engine3();
    EngineOptions o;
    o.lambda = 3.0 * ep.geom.moire_g_length();
    o.tau = 4.0;
    o.valley_sign = -1;
    o.threads = 2;
    Engine em = build_engine(ep.geom, nn_only_preset(), nullptr, o);

    // at nq = 1 both grids consist of the valley point alone, and the
    // two valleys are exact time-reversal images there
    DosOptions opts;
    opts.nq = 1;
    opts.epsilon = 0.05;
    opts.emin = -9.0;
    opts.emax = 9.0;
    opts.n_energies = 401;
    DosCurve a1 = dos({&ep}, opts, 1);
    DosCurve b1 = dos({&em}, opts, 1);
    double worst = 0.0;
    for (size_t i = 0; i < a1.dos.size(); ++i) {
        worst = std::max(worst, std::abs(a1.dos[i] - b1.dos[i]));
    }
    CHECK(worst < 1e-8);

    // on a finite grid the two valley meshes sample inequivalent momenta
    // (the truncated spectrum is not exactly grid-periodic), so the curves
    // agree only up to the quadrature noise of the grid
    opts.nq = 4;
    DosCurve a = dos({&ep}, opts, 1);
    DosCurve b = dos({&em}, opts, 1);
    CHECK(dos_l1_distance(a, b) < 3.0 * std::max(a.noise_estimate, b.noise_estimate));

    // the two-engine curve is the exact average of the per-engine curves
    DosCurve both = dos({&ep, &em}, opts);
    CHECK(both.valleys == 2);
    double lin = 0.0;
    for (size_t i = 0; i < both.dos.size(); ++i) {
        lin = std::max(lin, std::abs(both.dos[i] - 0.5 * (a.dos[i] + b.dos[i])));
    }
    CHECK(lin < 1e-12);
}

TEST_CASE("DOS is stable against q-grid refinement at matched smearing")
{
    const Engine& e = engine3();
    DosOptions opts;
    opts.epsilon = 0.08;
    opts.emin = -9.0;
    opts.emax = 9.0;
    opts.n_energies = 401;
    opts.nq = 4;
    DosCurve coarse = dos({&e}, opts);
    opts.nq = 8;
    DosCurve fine = dos({&e}, opts);
    CHECK(dos_l1_distance(coarse, fine) < 0.02);
    // an under-resolved smearing is flagged, not silently accepted
    opts.nq = 2;
    opts.epsilon = 1e-6;
    CHECK(!dos({&e}, opts).warning.empty());
}

TEST_CASE("Gamma-point convergence report: sweep layout and decaying errors")
{
    BilayerGeometry geom = twisted_graphene(3.0);
    const double g = geom.moire_g_length();
    EngineOptions base;
    base.threads = 2;
    std::vector<double> lambdas = {2.0 * g, 2.5 * g, 3.0 * g, 3.5 * g, 4.0 * g};
    std::vector<double> taus = {2.2, 2.6, 3.0, 3.4, 3.8, 4.2};
    ConvergenceReport rep = gamma_convergence(geom, nn_only_preset(), nullptr, lambdas, taus,
                                              base);
    CHECK(rep.theta == doctest::Approx(3.0 * M_PI / 180.0).epsilon(1e-12));
    CHECK(!rep.relaxed);
    // the reference point is excluded from its own sweep
    CHECK(rep.lambda_fit.x.size() == 4);
    CHECK(rep.tau_fit.x.size() == 5);
    CHECK(rep.lambda_fit.slope > 0.0);
    CHECK(rep.tau_fit.slope > 0.0);
    for (double err : rep.lambda_fit.error) CHECK(err >= 0.0);

    const std::string path = "convergence_tmp.json";
    save_convergence(rep, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::remove(path.c_str());
    CHECK(text.find("lambda_sweep") != std::string::npos);
    CHECK(text.find("tau_sweep") != std::string::npos);

    CHECK_THROWS(gamma_convergence(geom, nn_only_preset(), nullptr, {g, 2.0 * g}, taus, base));
}

TEST_CASE("DOS L1 distance: identity and a constant-offset curve")
{
    // endpoints are treated as outside the other curve's support, so use a
    // curve that vanishes there (as physical smeared DOS windows do)
    DosCurve a;
    for (int i = 0; i <= 100; ++i) {
        a.energies.push_back(i * 0.01);
        a.dos.push_back(std::sin(M_PI * i / 100.0) * (1.0 + 0.3 * std::sin(0.2 * i)));
    }
    CHECK(dos_l1_distance(a, a) < 1e-15);

    DosCurve b = a;
    for (auto& v : b.dos) v += 0.25;
    // interior trapezoids see the 0.25 offset over the unit window
    CHECK(dos_l1_distance(a, b) == doctest::Approx(0.25).epsilon(0.05));
}
