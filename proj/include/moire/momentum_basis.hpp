#ifndef MOIRE_MOMENTUM_BASIS_HPP
#define MOIRE_MOMENTUM_BASIS_HPP

#include <complex>
#include <string>
#include <unordered_map>
#include <vector>

#include "moire/geometry.hpp"
#include "moire/hopping.hpp"
#include "moire/relaxation.hpp"

namespace moire {

/// One retained plane-wave degree of freedom. For a layer-j element the
/// wavevector offset G is a reciprocal vector of the OTHER layer, and the
/// element sits at total momentum q + G.
struct BasisElement {
    int layer = 1;   // 1 or 2
    Vector2i n;      // reciprocal index, position |Theta21 n| < Lambda
    Vector2d G;      // 1/angstrom
    int orbital = 0;
};

struct MomentumBasis {
    std::vector<BasisElement> elements;  // lexicographic in (layer, n, orbital)
    double lambda = 0.0;                 // 1/angstrom
    Vector2d valley = Vector2d::Zero();  // anchor momentum q_j

    int size() const { return static_cast<int>(elements.size()); }
};

/// Largest Lambda for which the retained momenta disk stays homotopically
/// trivial on both monolayer reciprocal tori.
double homotopy_limit(const BilayerGeometry& geom);

MomentumBasis build_basis(const BilayerGeometry& geom, double lambda, const Vector2d& valley);

struct MeshSpec {
    double spacing = 0.0;  // angstrom, 0 = a/12
    double extent = 0.0;   // angstrom, 0 = 1.5 * interlayer cutoff
};

/// Interlayer momentum coupling sampled on the doubly-nested grid
/// xi = anchor + G + G' with G in R2*, G' in R1'; the anchor is the valley
/// momentum the Hamiltonian is built around, so queries at q near the valley
/// fall inside the sampled islands. Islands sit at the coarse positions
/// anchor + B1 s and extend to the fine radius `coverage` (moire scale),
/// which must reach the basis truncation Lambda; islands are kept while any
/// of their points can carry weight under the smooth radial truncation
/// chi_tau(|xi|). Values are stored UNWEIGHTED (chi_tau is applied at
/// assembly from the query's own xi) and carry the c1* c2* normalization,
/// i.e. (|Gamma1||Gamma2|)^{-1/2} integral h e^{-i xi.y}.
struct SampledInterlayerCoupling {
    double tau = 0.0;                        // 1/angstrom, radial support of chi_tau
    double chi_width = 0.5;                  // 1/angstrom, smoothing of chi_tau
    double coverage = 0.0;                   // 1/angstrom, fine radius per island
    Vector2d anchor = Vector2d::Zero();      // valley momentum q0, 1/angstrom
    Matrix2d b1, b2;                         // layer reciprocal bases
    Matrix2d theta;                          // fine (moire) basis
    int norb1 = 0, norb2 = 0;
    bool relaxed = false;
    double spacing = 0.0, extent = 0.0;      // real-space mesh actually used
    std::vector<Vector2d> delta;             // orbital-pair shifts, norb1*norb2

    struct Sample {
        Vector2i n, m;            // xi = anchor + b2*n + b1*m
        Vector2d xi;
        Eigen::MatrixXcd values;  // norb1 x norb2, eV
        double chi = 1.0;         // truncation weight applied
        bool untouched = true;    // chi == 1 (below tau - chi_width)
    };
    std::vector<Sample> samples;

    // spatial hash over xi for interpolation stencils
    double fine_len = 0.0;  // shortest nonzero |theta * n|
    double hash_cell = 0.0;
    Vector2d xi_min = Vector2d::Zero(), xi_max = Vector2d::Zero();  // sample bounding box
    std::unordered_map<long long, std::vector<int>> grid;

    Vector2d pair_delta(int a1, int a2) const { return delta[static_cast<size_t>(a1) * norb2 + a2]; }
    std::vector<int> nearby(const Vector2d& xi) const;
    void build_index();
};

/// Smooth radial truncation weight: 1 below tau - width, quintic ramp to 0
/// at tau. Applied to the interlayer coupling as a function of its momentum
/// argument, chi_tau(|xi|) h(xi); sample values are stored unweighted and
/// the assembly applies this factor from the query's xi.
double chi_tau(double g_norm, double tau, double width);

/// u may be null for the unrelaxed coupling. anchor is the valley momentum
/// the samples are taken around; coverage is the fine (per-island) sampling
/// radius, which must exceed the basis truncation Lambda plus a stencil
/// margin (coverage <= 0 picks the default-Lambda-sized radius).
SampledInterlayerCoupling sample_interlayer(const InterlayerModel& model,
                                            const DisplacementField* u,
                                            const BilayerGeometry& geom, double tau,
                                            const Vector2d& anchor, double coverage = 0.0,
                                            MeshSpec mesh = {}, int threads = 1);

/// Reweights an existing sampled coupling to a smaller tau (reapplies the
/// chi ramp metadata). Avoids resampling during tau sweeps.
SampledInterlayerCoupling retruncate(const SampledInterlayerCoupling& s, double new_tau);

/// Quadratic interpolation of all orbital-pair values at xi, including the
/// orbital-shift phase e^{i xi . Delta}. Returns a norb1 x norb2 matrix; zero
/// (with *outside = true) when xi falls outside every sampled island.
Eigen::MatrixXcd interpolate_coupling_matrix(const SampledInterlayerCoupling& s,
                                             const Vector2d& xi, bool* outside = nullptr);

std::complex<double> interpolate_coupling(const SampledInterlayerCoupling& s,
                                          const Vector2d& xi, int a1, int a2,
                                          bool* outside = nullptr);

void save_coupling_cache(const SampledInterlayerCoupling& s, const std::string& path);
SampledInterlayerCoupling load_coupling_cache(const std::string& path);

}  // namespace moire

#endif
