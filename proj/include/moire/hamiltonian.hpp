#ifndef MOIRE_HAMILTONIAN_HPP
#define MOIRE_HAMILTONIAN_HPP

#include <map>
#include <utility>
#include <vector>

#include "moire/geometry.hpp"
#include "moire/hopping.hpp"
#include "moire/momentum_basis.hpp"
#include "moire/relaxation.hpp"

namespace moire {

/// Configuration-space Fourier data of one layer's relaxed Bloch sums,
/// independent of momentum. For hopping term t at cell vector C the stored
/// coefficient is
///   c_g(t) = mean_s e^{-2 pi i sigma_j g.s} A(t) radial(|C + tau_ba
///            + sigma_j (u(s) - u(s - M^{-1}C)) / 2|)
/// over the moire-fractional configuration torus s (sigma_1 = +1,
/// sigma_2 = -1). The (row, col) intralayer entry of H is then
///   sum_t e^{i (q + G_col).C_t} c_{n_row - n_col}(t)
/// plus the onsite diagonal; u = 0 collapses to the rigid Bloch sum.
struct IntralayerTable {
    int layer = 1;
    int norb = 0;
    int gcut = 0;                  // offsets kept: |g|_inf <= gcut
    bool rigid = true;             // u == 0, only g = 0 stored
    std::vector<HoppingTerm> terms;
    std::vector<Vector2d> cell_vec;  // per term, own-lattice cell vector (angstrom)
    std::vector<double> onsite;
    // coeffs[g] is one complex amplitude per term
    std::map<std::pair<int, int>, std::vector<std::complex<double>>> coeffs;

    const std::vector<std::complex<double>>* offset(int gx, int gy) const
    {
        auto it = coeffs.find({gx, gy});
        return it == coeffs.end() ? nullptr : &it->second;
    }
};

/// grid_n = 0 picks a default sized to the Fourier content of u; too-coarse
/// explicit grids throw (aliasing guard).
IntralayerTable build_intralayer_table(const IntralayerModel& model, const DisplacementField* u,
                                       const BilayerGeometry& geom, int layer, int gcut,
                                       int grid_n = 0);

/// Fourier coefficients (in the configuration offset g) of the relaxed Bloch
/// sum at a fixed total momentum: map g -> norb x norb orbital matrix. The
/// (row, col) block of H uses this map at the column's total momentum with
/// g = n_row - n_col.
std::map<std::pair<int, int>, MatrixXcd> intralayer_block(const IntralayerTable& table,
                                                          const Vector2d& q_total);

struct KHamiltonian {
    Vector2d q = Vector2d::Zero();
    Eigen::MatrixXcd matrix;  // dimension = basis size, Hermitian
};

/// Dense H_r(q): intralayer blocks from the tables, interlayer upper block
/// from interpolated coupling at xi = q + G_row + G_col (lower block is the
/// conjugate transpose). outside_count, when given, accumulates the number of
/// interlayer queries that fell outside the sampled islands.
KHamiltonian assemble(const Vector2d& q, const MomentumBasis& basis,
                      const IntralayerTable& table1, const IntralayerTable& table2,
                      const SampledInterlayerCoupling& coupling, double inter_scale = 1.0,
                      int threads = 1, long* outside_count = nullptr);

struct EngineOptions {
    double lambda = 0.0;      // 1/angstrom, 0 = min(6 moire shells, half homotopy limit)
    double tau = 0.0;         // 1/angstrom, 0 = 2.5x the monolayer reciprocal constant
    int gcut = 0;             // 0 = u.gmax + 2 (0 when unrelaxed)
    int grid_n = 0;
    MeshSpec mesh;
    double inter_scale = 1.0;
    int valley_sign = +1;     // +1 for K, -1 for the time-reversed valley
    int threads = 1;
};

/// Everything needed to evaluate H_r(q) near one valley.
struct Engine {
    BilayerGeometry geom;
    IntralayerModel intra1, intra2;
    InterlayerModel inter;
    DisplacementField u;       // empty when unrelaxed
    MomentumBasis basis;
    IntralayerTable table1, table2;
    SampledInterlayerCoupling coupling;
    double inter_scale = 1.0;
    int threads = 1;

    Vector2d valley() const { return basis.valley; }
};

/// Valley anchor for the given sign: midpoint of the two layers' Dirac
/// momenta (they differ on the moire scale only).
Vector2d valley_anchor(const BilayerGeometry& geom, int sign);

/// Default truncation radii: lambda covers ~6 moire shells capped below the
/// homotopy limit; tau is 2.5x the monolayer reciprocal constant.
double default_lambda(const BilayerGeometry& geom);
double default_tau(const BilayerGeometry& geom);

/// coupling_cache, when non-null, is consumed instead of resampling (caller
/// checks key compatibility).
Engine build_engine(const BilayerGeometry& geom, const HoppingModel& model,
                    const DisplacementField* u, const EngineOptions& opts,
                    SampledInterlayerCoupling* coupling_cache = nullptr);

KHamiltonian hamiltonian_at(const Engine& engine, const Vector2d& q,
                            long* outside_count = nullptr);

/// Sorted ascending eigenvalues of H_r(q), eV.
Eigen::VectorXd eigenvalues_at(const Engine& engine, const Vector2d& q);

}  // namespace moire

#endif
