#include <doctest.h>

#include <cmath>

#include "moire/geometry.hpp"
#include "test_helpers.hpp"

using namespace moire;
using moire::testing::twisted_graphene;

TEST_CASE("reciprocal basis satisfies the duality identity")
{
    Lattice2D g = make_graphene();
    Matrix2d prod = reciprocal(g).basis.transpose() * g.basis;
    CHECK((prod - 2.0 * M_PI * Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    // honeycomb reciprocal constant 4 pi / (sqrt(3) a)
    const double b = 4.0 * M_PI / (std::sqrt(3.0) * 2.46);
    CHECK(reciprocal(g).basis.col(0).norm() == doctest::Approx(b).epsilon(1e-12));
    CHECK(reciprocal(g).basis.col(1).norm() == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("moire cell length matches the closed form a / (2 sin(theta/2))")
{
    for (double deg : {0.6, 1.1, 3.0, 6.0}) {
        BilayerGeometry geom = twisted_graphene(deg);
        const double expect = 2.46 / (2.0 * std::sin(deg * M_PI / 360.0));
        CHECK(geom.moire_cell.col(0).norm() == doctest::Approx(expect).epsilon(1e-9));
        CHECK(geom.moire_cell.col(1).norm() == doctest::Approx(expect).epsilon(1e-9));
        // shortest moire reciprocal vector, same identity in momentum
        const double g_m = 2.0 * std::sin(deg * M_PI / 360.0) *
                           reciprocal(geom.layer1).basis.col(0).norm();
        CHECK(geom.moire_g_length() == doctest::Approx(g_m).epsilon(1e-9));
    }
}

TEST_CASE("theta matrix is the difference of the layer reciprocal bases")
{
    BilayerGeometry geom = twisted_graphene(2.0);
    Matrix2d diff = reciprocal(geom.layer2).basis - reciprocal(geom.layer1).basis;
    CHECK((geom.theta_matrix - diff).cwiseAbs().maxCoeff() < 1e-12);
    // moire cell is dual to it: Theta^T * M = 2 pi I
    Matrix2d prod = geom.theta_matrix.transpose() * geom.moire_cell;
    CHECK((prod - 2.0 * M_PI * Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("degenerate twists are rejected")
{
    Lattice2D g = make_graphene();
    CHECK_THROWS(make_twisted_pair(g, 0.0));
    CHECK_THROWS(make_twisted_pair(g, -0.01));
    CHECK_THROWS(make_twisted_pair(g, 0.7));  // > pi/6
}

TEST_CASE("dirac momentum length is 4 pi / (3 a)")
{
    Lattice2D g = make_graphene();
    CHECK(dirac_momentum(g).norm() == doctest::Approx(4.0 * M_PI / (3.0 * 2.46)).epsilon(1e-12));
}

TEST_CASE("commensurate cells have the closed-form angle and atom count")
{
    Lattice2D g = make_graphene();
    CommensurateCell c12 = commensurate_supercell(1, 2, g);
    CHECK(c12.atom_count == 28);
    CHECK(c12.geom.twist_angle * 180.0 / M_PI == doctest::Approx(21.7867893).epsilon(1e-6));

    CommensurateCell c23 = commensurate_supercell(2, 3, g);
    CHECK(c23.atom_count == 76);
    const double expect = std::acos(37.0 / 38.0);
    CHECK(c23.geom.twist_angle == doctest::Approx(expect).epsilon(1e-12));

    CHECK_THROWS(commensurate_supercell(1, 1, g));
    CHECK_THROWS(commensurate_supercell(2, 4, g));
}

TEST_CASE("both layer lattices are sublattices of the commensurate supercell")
{
    CommensurateCell cell = commensurate_supercell(1, 2, make_graphene());
    for (int j = 1; j <= 2; ++j) {
        Matrix2d frac = cell.geom.layer(j).basis.inverse() * cell.supercell.basis;
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) {
                CHECK(std::abs(frac(r, c) - std::round(frac(r, c))) < 1e-9);
            }
        }
        // dually, the layer reciprocal lattice lies on the supercell's
        Matrix2d srec = reciprocal(cell.supercell.basis).basis;
        Matrix2d back = srec.inverse() * reciprocal(cell.geom.layer(j)).basis;
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) {
                CHECK(std::abs(back(r, c) - std::round(back(r, c))) < 1e-9);
            }
        }
    }
}

TEST_CASE("one-sided and symmetric conventions give the same moire scale")
{
    BilayerGeometry sym = twisted_graphene(2.0, RotationConvention::Symmetric);
    BilayerGeometry one = twisted_graphene(2.0, RotationConvention::OneSided);
    CHECK(sym.moire_g_length() == doctest::Approx(one.moire_g_length()).epsilon(1e-9));
    CHECK(sym.moire_cell_area() == doctest::Approx(one.moire_cell_area()).epsilon(1e-9));
}
