#ifndef MOIRE_OBSERVABLES_HPP
#define MOIRE_OBSERVABLES_HPP

#include <string>
#include <vector>

#include "moire/hamiltonian.hpp"

namespace moire {

/// Piecewise-linear path through named vertices of the moire Brillouin zone,
/// in absolute momentum coordinates near one valley.
struct KPath {
    std::vector<std::string> names;
    std::vector<Vector2d> vertices;  // 1/angstrom
    int points_per_segment = 24;

    std::vector<Vector2d> points() const;
    std::vector<double> distances() const;         // cumulative arc length per point
    std::vector<double> vertex_distances() const;  // arc length at each vertex
};

/// K_M -> Gamma_M -> M_M -> K'_M for the given valley. The moire Dirac points
/// are the two layers' monolayer Dirac momenta; Gamma_M and M_M follow from
/// the hexagon geometry (any of the equivalent centers works, by the
/// incommensurate-BZ shift symmetry).
KPath default_path(const BilayerGeometry& geom, int valley_sign, int points_per_segment = 24);

struct BandStructure {
    std::vector<double> s;        // arc length, 1/angstrom
    std::vector<Vector2d> k;      // absolute momenta
    Eigen::MatrixXd energies;     // (Nk, basis size), each row sorted ascending
};

BandStructure bands(const Engine& engine, const KPath& path);

/// CSV: header, then s,kx,ky,e1..eN per row.
void save_bands(const BandStructure& bs, const std::string& path);

struct DosOptions {
    double emin = 0.0, emax = 0.0;  // eV; both 0 = auto from spectral range
    int n_energies = 801;
    double epsilon = 0.002;         // eV, Gaussian smearing (standard deviation)
    int nq = 8;                     // nq x nq periodic grid over the moire BZ
};

struct DosCurve {
    std::vector<double> energies;  // eV
    std::vector<double> dos;       // 1/eV, normalized trace: integral = 1
    double epsilon = 0.0;
    int nq = 0;
    int valleys = 0;
    double noise_estimate = 0.0;   // eV, max adjacent-grid eigenvalue jump
    std::string warning;           // set when epsilon under-resolves the grid
};

/// D(E) = mean over engines (valleys) of (1/dim) sum_eigs mean_q
/// phi_eps(E - lambda), phi_eps the unit-mass Gaussian. reported_valleys lets
/// a single engine stand in for both time-reversal-related valleys.
DosCurve dos(const std::vector<const Engine*>& engines, const DosOptions& opts,
             int reported_valleys = 0);

void save_dos(const DosCurve& curve, const std::string& path);

/// log-linear fit of the relative Gamma-point error against one truncation
/// parameter.
struct SweepFit {
    std::vector<double> x;      // swept parameter values (reference excluded)
    std::vector<double> error;  // relative errors
    double slope = 0.0;         // gamma: error ~ exp(-gamma * x)
    double intercept = 0.0;
    double r2 = 0.0;
    bool ok = false;            // false when r2 < 0.9 or too few usable points
    bool monotone = true;
    std::string note;
};

struct ConvergenceReport {
    double theta = 0.0;  // radians
    bool relaxed = false;
    double reference_energy = 0.0;  // eV, |eigenvalue| nearest 0 at Gamma_M, max (lambda, tau)
    SweepFit lambda_fit;
    SweepFit tau_fit;
};

/// Gamma-point convergence study: reference at the largest (lambda, tau);
/// each sweep varies one parameter with the other at its maximum. Sweeps need
/// at least 5 points.
ConvergenceReport gamma_convergence(const BilayerGeometry& geom, const HoppingModel& model,
                                    const DisplacementField* u,
                                    const std::vector<double>& lambdas,
                                    const std::vector<double>& taus,
                                    const EngineOptions& base);

void save_convergence(const ConvergenceReport& report, const std::string& path);

/// Trapezoid L1 distance between two DOS curves on the first curve's grid
/// (second curve linearly interpolated).
double dos_l1_distance(const DosCurve& a, const DosCurve& b);

}  // namespace moire

#endif
