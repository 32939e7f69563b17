#include "moire/geometry.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace moire {

Matrix2d rotation(double angle)
{
    Matrix2d r;
    r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return r;
}

ReciprocalBasis reciprocal(const Matrix2d& direct_basis)
{
    if (std::abs(direct_basis.determinant()) < 1e-14) {
        throw std::invalid_argument("reciprocal: singular lattice basis");
    }
    ReciprocalBasis rb;
    rb.basis = 2.0 * M_PI * direct_basis.inverse().transpose();
    rb.cell_area = std::abs(rb.basis.determinant());
    return rb;
}

ReciprocalBasis reciprocal(const Lattice2D& lat) { return reciprocal(lat.basis); }

double BilayerGeometry::moire_g_length() const
{
    double best = std::numeric_limits<double>::max();
    for (int i = -1; i <= 1; ++i) {
        for (int j = -1; j <= 1; ++j) {
            if (i == 0 && j == 0) continue;
            best = std::min(best, (theta_matrix * Vector2d(i, j)).norm());
        }
    }
    return best;
}

static Lattice2D rotate_lattice(const Lattice2D& lat, double angle)
{
    Lattice2D out = lat;
    Matrix2d r = rotation(angle);
    out.basis = r * lat.basis;
    for (auto& orb : out.orbitals) orb.position = r * orb.position;
    return out;
}

static BilayerGeometry finish_pair(Lattice2D l1, Lattice2D l2, double theta,
                                   RotationConvention conv)
{
    BilayerGeometry g;
    g.layer1 = std::move(l1);
    g.layer2 = std::move(l2);
    g.twist_angle = theta;
    g.convention = conv;
    Matrix2d a1i = g.layer1.basis.inverse();
    Matrix2d a2i = g.layer2.basis.inverse();
    g.theta_matrix = 2.0 * M_PI * (a2i.transpose() - a1i.transpose());
    Matrix2d d = a2i - a1i;
    if (std::abs(d.determinant()) < 1e-14) {
        throw std::invalid_argument("twisted pair is commensurate-degenerate (Theta21 singular)");
    }
    g.moire_cell = d.inverse();
    return g;
}

BilayerGeometry make_twisted_pair(const Lattice2D& monolayer, double theta,
                                  RotationConvention conv)
{
    if (!(theta > 0.0) || theta > M_PI / 6.0 + 1e-12) {
        throw std::invalid_argument("make_twisted_pair: theta must be in (0, pi/6]");
    }
    if (std::abs(monolayer.basis.determinant()) < 1e-14) {
        throw std::invalid_argument("make_twisted_pair: singular monolayer basis");
    }
    if (conv == RotationConvention::Symmetric) {
        return finish_pair(rotate_lattice(monolayer, -theta / 2.0),
                           rotate_lattice(monolayer, theta / 2.0), theta, conv);
    }
    return finish_pair(monolayer, rotate_lattice(monolayer, theta), theta, conv);
}

CommensurateCell commensurate_supercell(int m, int n, const Lattice2D& monolayer)
{
    if (m == n) throw std::invalid_argument("commensurate_supercell: m == n gives zero twist");
    if (m <= 0 || n <= 0) throw std::invalid_argument("commensurate_supercell: m, n must be positive");
    if (std::gcd(m, n) != 1) throw std::invalid_argument("commensurate_supercell: gcd(m, n) must be 1");

    const double mm = m, nn = n;
    const double denom = mm * mm + mm * nn + nn * nn;
    const double cos_theta = (mm * mm + 4.0 * mm * nn + nn * nn) / (2.0 * denom);
    const double theta = std::acos(std::min(1.0, std::max(-1.0, cos_theta)));

    CommensurateCell cell;
    cell.m = m;
    cell.n = n;
    cell.geom = make_twisted_pair(monolayer, theta, RotationConvention::OneSided);

    // t1 = m a1 + n a2, t2 = -n a1 + (m+n) a2 in layer-1 coordinates.
    Matrix2d coeff;
    coeff << mm, -nn, nn, mm + nn;
    cell.supercell.basis = cell.geom.layer1.basis * coeff;

    // Sanity: both layers' lattices must be sublattices of the supercell.
    for (int j = 1; j <= 2; ++j) {
        Matrix2d frac = cell.geom.layer(j).basis.inverse() * cell.supercell.basis;
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) {
                if (std::abs(frac(r, c) - std::round(frac(r, c))) > 1e-9) {
                    throw std::runtime_error("commensurate_supercell: supercell fails integer check");
                }
            }
        }
    }

    const int cells_per_layer = static_cast<int>(std::llround(denom));
    cell.atom_count = cells_per_layer *
                      (cell.geom.layer1.num_orbitals() + cell.geom.layer2.num_orbitals());
    return cell;
}

Lattice2D make_graphene(double a)
{
    Lattice2D lat;
    lat.basis << a, a / 2.0, 0.0, a * std::sqrt(3.0) / 2.0;
    Vector2d tau_b = (lat.basis.col(0) + lat.basis.col(1)) / 3.0;
    lat.orbitals = {{"A", Vector2d::Zero(), 0.0}, {"B", tau_b, 0.0}};
    return lat;
}

Vector2d dirac_momentum(const Lattice2D& lat)
{
    Matrix2d b = reciprocal(lat).basis;
    return (b.col(0) - b.col(1)) / 3.0;
}

}  // namespace moire
