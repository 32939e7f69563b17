#ifndef MOIRE_GEOMETRY_HPP
#define MOIRE_GEOMETRY_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace moire {

using Eigen::Matrix2d;
using Eigen::Vector2d;
using Eigen::Vector2i;

/// One orbital of a 2D lattice: label, in-cell position (angstrom) and
/// out-of-plane height offset (angstrom).
struct Orbital {
    std::string label;
    Vector2d position;
    double height = 0.0;
};

/// A 2D Bravais lattice with a finite orbital set. Columns of `basis` are
/// the lattice vectors in angstrom.
struct Lattice2D {
    Matrix2d basis;
    std::vector<Orbital> orbitals;

    double cell_area() const { return std::abs(basis.determinant()); }
    int num_orbitals() const { return static_cast<int>(orbitals.size()); }
};

/// Reciprocal lattice basis, 2*pi*A^{-T}. Satisfies basis^T * A = 2*pi*I.
struct ReciprocalBasis {
    Matrix2d basis;
    double cell_area = 0.0;
};

ReciprocalBasis reciprocal(const Matrix2d& direct_basis);
ReciprocalBasis reciprocal(const Lattice2D& lat);

enum class RotationConvention {
    Symmetric,  // layer 1 at -theta/2, layer 2 at +theta/2
    OneSided,   // layer 1 unrotated, layer 2 at +theta
};

/// Twisted bilayer: two lattices plus the derived incommensurate-BZ matrix
/// Theta21 = 2*pi*(A2^{-T} - A1^{-T}) and moire cell (A2^{-1} - A1^{-1})^{-1}.
struct BilayerGeometry {
    Lattice2D layer1;
    Lattice2D layer2;
    double twist_angle = 0.0;  // radians
    RotationConvention convention = RotationConvention::Symmetric;
    Matrix2d theta_matrix;     // 1/angstrom
    Matrix2d moire_cell;       // angstrom

    const Lattice2D& layer(int j) const { return j == 1 ? layer1 : layer2; }
    double moire_cell_area() const { return std::abs(moire_cell.determinant()); }
    /// Shortest nonzero moire reciprocal vector |Theta21 * n|.
    double moire_g_length() const;
};

Matrix2d rotation(double angle);

BilayerGeometry make_twisted_pair(const Lattice2D& monolayer, double theta,
                                  RotationConvention conv = RotationConvention::Symmetric);

/// Commensurate (m,n) twisted cell for oracle runs.
struct CommensurateCell {
    BilayerGeometry geom;   // one-sided rotation at the commensurate angle
    Lattice2D supercell;    // periodic supercell (no orbitals attached)
    int atom_count = 0;
    int m = 0, n = 0;
};

/// cos(theta) = (m^2 + 4mn + n^2) / (2 (m^2 + mn + n^2)); requires
/// gcd(m,n) == 1 and m != n.
CommensurateCell commensurate_supercell(int m, int n, const Lattice2D& monolayer);

/// Honeycomb monolayer with two pz orbitals (A, B). a is the lattice
/// constant in angstrom, default 2.46.
Lattice2D make_graphene(double a = 2.46);

/// Dirac momentum K = (b1 - b2)/3 of a honeycomb lattice in the periodic
/// gauge used by monolayer_bloch.
Vector2d dirac_momentum(const Lattice2D& lat);

}  // namespace moire

#endif
