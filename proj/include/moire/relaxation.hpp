#ifndef MOIRE_RELAXATION_HPP
#define MOIRE_RELAXATION_HPP

#include <complex>
#include <string>
#include <vector>

#include "moire/geometry.hpp"

namespace moire {

using Eigen::Vector2cd;
using Eigen::VectorXd;

/// Generalized stacking fault energy as a truncated Fourier series over a
/// layer unit cell: Phi(b) = sum_m c_m exp(i G(m).b), with the mode set
/// closed under m -> -m and real coefficients, so Phi is real.
struct GsfeModel {
    std::vector<std::pair<Vector2i, double>> coeffs;  // (lattice index, eV/A^2)

    /// c0 + c1 * sum over the six first-star vectors.
    static GsfeModel first_star(double c0, double c1);
    bool is_constant() const;
};

/// Isotropic 2D elasticity: energy density 0.5*K*tr(e)^2 + G*dev(e):dev(e).
struct ElasticityTensor {
    double bulk_K = 0.0;   // eV/A^2
    double shear_G = 0.0;  // eV/A^2
};

/// Relative in-plane relaxation field over the moire cell, stored as Fourier
/// coefficients on the moire reciprocal lattice Theta21 * Z^2:
///   u(x) = sum_n u_n exp(i (Theta21 n).x),  u_{-n} = conj(u_n), u_0 = 0.
/// Identical layers: u1 = +u/2, u2 = -u/2 (Appendix-style symmetry).
struct DisplacementField {
    Matrix2d theta_basis = Matrix2d::Zero();  // moire reciprocal basis (columns)
    int gmax = 0;                             // modes kept: 0 < |n|_inf <= gmax
    std::vector<Vector2i> modes;              // full set, conjugate-closed
    std::vector<Vector2cd> coeffs;            // angstrom

    bool empty() const { return modes.empty(); }
    /// u at moire fractional coordinate t (x = moire_cell * t).
    Vector2d eval_frac(const Vector2d& t) const;
    /// Layer displacement u_j at the layer's configuration coordinate,
    /// given as a fractional coordinate of that layer's configuration torus
    /// (which coincides with the moire fractional coordinate).
    Vector2d layer_frac(int layer, const Vector2d& t) const;
    double max_norm(int samples = 48) const;
    double coeff_l2() const;
};

DisplacementField zero_displacement(const BilayerGeometry& geom, int gmax);

void save_displacement(const DisplacementField& u, const std::string& path);
DisplacementField load_displacement(const std::string& path);

/// Real minimization variables: 4 reals (Re ux, Im ux, Re uy, Im uy) per
/// half-set mode; the conjugate modes are implied.
VectorXd pack_field(const DisplacementField& u);
void unpack_field(const VectorXd& params, DisplacementField& u);

struct RelaxOptions {
    int gmax = 5;          // Fourier truncation of u
    int grid_n = 0;        // quadrature grid, 0 = 4 * (content)
    double grad_tol = 1e-8;
    int max_iter = 2000;
};

/// Total energy per moire cell area (eV/A^2): cell-averaged GSFE plus the
/// elastic quadratic form, both layers.
double total_energy(const DisplacementField& u, const GsfeModel& gsfe,
                    const ElasticityTensor& elast, const BilayerGeometry& geom,
                    int grid_n = 0);

/// Analytic gradient of total_energy with respect to pack_field(u).
VectorXd energy_gradient(const DisplacementField& u, const GsfeModel& gsfe,
                         const ElasticityTensor& elast, const BilayerGeometry& geom,
                         int grid_n = 0);

struct RelaxResult {
    DisplacementField u;
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0.0;
    std::vector<double> energy_trace;  // accepted iterates, non-increasing
};

RelaxResult relax(const GsfeModel& gsfe, const ElasticityTensor& elast,
                  const BilayerGeometry& geom, const RelaxOptions& opts = {});

}  // namespace moire

#endif
