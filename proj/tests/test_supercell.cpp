#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "moire/observables.hpp"
#include "moire/supercell.hpp"
#include "test_helpers.hpp"

using namespace moire;
using cplx = std::complex<double>;

namespace {

// Distance-search tight-binding oracle: no cell-offset bookkeeping, just a
// scan over atom pairs and supercell translations. Deliberately independent
// of the production lookup-table implementation.
MatrixXcd pair_loop_bloch(const SupercellHamiltonian& sc, const Vector2d& k)
{
    const int dim = sc.dim();
    MatrixXcd h = MatrixXcd::Zero(dim, dim);
    const Matrix2d s = sc.cell.supercell.basis;
    const double a = sc.cell.geom.layer1.basis.col(0).norm();
    const double bond = a / std::sqrt(3.0);

    for (int p = 0; p < dim; ++p) {
        const auto& ap = sc.atoms[p];
        const Vector2d xp = ap.pos + ap.disp;
        for (int q = 0; q < dim; ++q) {
            const auto& aq = sc.atoms[q];
            for (int ti = -4; ti <= 4; ++ti) {
                for (int tj = -4; tj <= 4; ++tj) {
                    const Vector2d t_vec = s * Vector2d(ti, tj);
                    const Vector2d sep = aq.pos + aq.disp + t_vec - xp;
                    const cplx phase = std::exp(cplx(0.0, k.dot(t_vec)));
                    if (ap.layer == aq.layer) {
                        // NN model: a hop wherever two same-layer sites sit a
                        // bond length apart, rescaled by the stretch factor
                        if (std::abs(sep.norm() - bond) > 0.3 * bond) continue;
                        const double amp =
                            -2.7 * std::exp(-(sep.norm() - bond) / sc.intra1.decay_length);
                        h(p, q) += amp * phase;
                    } else {
                        const int a1 = ap.layer == 1 ? ap.orbital : aq.orbital;
                        const int a2 = ap.layer == 1 ? aq.orbital : ap.orbital;
                        h(p, q) += interlayer_value(sc.inter, sep, a1, a2) * phase;
                    }
                }
            }
        }
    }
    return h;
}

}  // namespace

TEST_CASE("(1,2) supercell: atom count, Hermiticity at random momenta")
{
    CommensurateCell cell = commensurate_supercell(1, 2, make_graphene());
    SupercellHamiltonian sc = build_supercell(cell, nn_only_preset(), nullptr);
    CHECK(sc.dim() == 28);

    auto gen = testing::rng(8);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int i = 0; i < 5; ++i) {
        Vector2d k(uni(gen), uni(gen));
        MatrixXcd h = supercell_bloch(sc, k);
        CHECK((h - h.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("supercell Bloch matrix matches the pair-loop oracle")
{
    CommensurateCell cell = commensurate_supercell(1, 2, make_graphene());
    SupercellHamiltonian sc = build_supercell(cell, nn_only_preset(), nullptr);
    auto gen = testing::rng(9);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int i = 0; i < 3; ++i) {
        Vector2d k(uni(gen), uni(gen));
        MatrixXcd got = supercell_bloch(sc, k);
        MatrixXcd ref = pair_loop_bloch(sc, k);
        CHECK((got - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("decoupled supercell spectrum folds the two monolayers")
{
    CommensurateCell cell = commensurate_supercell(1, 2, make_graphene());
    HoppingModel model = nn_only_preset();
    model.interlayer.t_perp = 0.0;
    SupercellHamiltonian sc = build_supercell(cell, model, nullptr);

    auto gen = testing::rng(10);
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    const Matrix2d s_rec = reciprocal(cell.supercell.basis).basis;

    for (int trial = 0; trial < 3; ++trial) {
        Vector2d k(uni(gen), uni(gen));
        Eigen::VectorXd got = supercell_eigenvalues(sc, k);

        std::vector<double> expect;
        for (int layer = 1; layer <= 2; ++layer) {
            const Lattice2D& lat = cell.geom.layer(layer);
            const Matrix2d b_inv = reciprocal(lat).basis.inverse();
            const IntralayerModel intra = layer == 1 ? sc.intra1 : sc.intra2;
            // distinct folded momenta: supercell reciprocal vectors modulo
            // the layer's reciprocal lattice
            std::set<std::pair<long, long>> seen;
            std::vector<Vector2d> folded;
            for (int i = -4; i <= 4; ++i) {
                for (int j = -4; j <= 4; ++j) {
                    Vector2d g = s_rec * Vector2d(i, j);
                    Vector2d f = b_inv * g;
                    auto wrap = [](double x) {
                        double w = x - std::floor(x);
                        return std::lround(w * 1e6) % 1000000;
                    };
                    if (seen.insert({wrap(f.x()), wrap(f.y())}).second) folded.push_back(g);
                }
            }
            REQUIRE(folded.size() == 7);
            for (const Vector2d& g : folded) {
                Eigen::SelfAdjointEigenSolver<MatrixXcd> es(
                    monolayer_bloch(intra, lat, k + g), Eigen::EigenvaluesOnly);
                for (int b = 0; b < es.eigenvalues().size(); ++b) {
                    expect.push_back(es.eigenvalues()(b));
                }
            }
        }
        std::sort(expect.begin(), expect.end());
        REQUIRE(static_cast<int>(expect.size()) == got.size());
        double worst = 0.0;
        for (int b = 0; b < got.size(); ++b) {
            worst = std::max(worst, std::abs(got(b) - expect[static_cast<size_t>(b)]));
        }
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("spectra are periodic over the supercell reciprocal lattice")
{
    CommensurateCell cell = commensurate_supercell(1, 2, make_graphene());
    SupercellHamiltonian sc = build_supercell(cell, nn_only_preset(), nullptr);
    const Matrix2d s_rec = reciprocal(cell.supercell.basis).basis;
    const Vector2d k(0.21, -0.13);
    Eigen::VectorXd a = supercell_eigenvalues(sc, k);
    Eigen::VectorXd b = supercell_eigenvalues(sc, k + s_rec * Vector2d(1.0, 0.0));
    Eigen::VectorXd c = supercell_eigenvalues(sc, k + s_rec * Vector2d(-1.0, 1.0));
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((a - c).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("compare_spectra: windowing, matching and count mismatches")
{
    Eigen::VectorXd a(5), b(5);
    a << -3.0, -0.5, 0.1, 0.4, 2.5;
    b << -3.1, -0.5, 0.1002, 0.4, 2.4;
    SpectraComparison cmp = compare_spectra(a, b, 1.0);
    CHECK(!cmp.count_mismatch);
    CHECK(cmp.bands_compared == 3);
    CHECK(cmp.max_deviation == doctest::Approx(2e-4).epsilon(1e-9));

    Eigen::VectorXd c(5);
    c << -3.0, -0.5, 0.1, 0.4, 0.9;  // one extra state slides into the window
    SpectraComparison bad = compare_spectra(a, c, 1.0);
    CHECK(bad.count_mismatch);
    CHECK(!bad.note.empty());
}

TEST_CASE("momentum engine agrees with the supercell oracle at (1,2)")
{
    CommensurateCell cell = commensurate_supercell(1, 2, make_graphene());
    HoppingModel model = nn_only_preset();
    SupercellHamiltonian sc = build_supercell(cell, model, nullptr);

    EngineOptions opts;
    opts.threads = 2;
    Engine engine = build_engine(cell.geom, model, nullptr, opts);

    // K_M, where the Dirac pair keeps low-energy states inside the window
    // (at 21.8 deg no band passes within 1 eV of zero at Gamma_M)
    const Vector2d k = default_path(cell.geom, +1).vertices[0];
    Eigen::VectorXd ev_oracle = supercell_eigenvalues(sc, k);
    Eigen::VectorXd ev_kspace = eigenvalues_at(engine, k);
    SpectraComparison cmp = compare_spectra(ev_oracle, ev_kspace, 1.0);
    CHECK(!cmp.count_mismatch);
    CHECK(cmp.bands_compared >= 2);
    CHECK(cmp.max_deviation < 5e-3);
}
