#ifndef MOIRE_HOPPING_HPP
#define MOIRE_HOPPING_HPP

#include <complex>
#include <map>
#include <string>
#include <vector>

#include "moire/geometry.hpp"

namespace moire {

using MatrixXcd = Eigen::MatrixXcd;

/// One real-space hopping term h_{aa'}(R): coupling from orbital `orb_from`
/// in the home cell to orbital `orb_to` in the cell at lattice offset `cell`.
struct HoppingTerm {
    Vector2i cell;
    int orb_from = 0;
    int orb_to = 0;
    double amplitude = 0.0;  // eV
    int shell = 0;           // 1-based neighbor shell index
    double r0 = 0.0;         // geometric bond length, angstrom
};

/// Intralayer shell model. Terms are closed under R -> -R with transposed
/// orbital indices, so the Bloch sum is Hermitian. Off-lattice separations
/// (mechanical relaxation) scale each shell amplitude by
/// exp(-(|x| - r0) / decay_length).
struct IntralayerModel {
    std::vector<HoppingTerm> terms;
    std::vector<double> onsite;  // eV, one per orbital
    int num_orbitals = 0;
    int num_shells = 0;
    double decay_length = 0.30;  // angstrom
};

/// Builds an intralayer model from per-shell amplitudes: shell k collects all
/// orbital pairs at the k-th smallest nonzero interatomic distance.
IntralayerModel build_shell_model(const Lattice2D& lat,
                                  const std::vector<double>& shell_amplitudes,
                                  const std::vector<double>& onsite);

/// Bloch sum in the periodic gauge, m(q) = sum_R h(R) e^{i q.R} + diag(onsite).
/// Exactly periodic: m(q + G) = m(q) for reciprocal lattice G.
MatrixXcd monolayer_bloch(const IntralayerModel& model, const Lattice2D& lat,
                          const Vector2d& q);

/// Distance-dependent interlayer coupling, isotropic in-plane by default:
/// k(r) = t_perp * exp(-(sqrt(r^2 + d^2) - d)/lambda) with a quintic ramp to
/// zero over [cutoff - cutoff_width, cutoff].
struct InterlayerModel {
    double t_perp = 0.0;        // eV
    double lambda = 0.3;        // angstrom
    double d = 3.35;            // layer separation, angstrom
    double cutoff = 8.0;        // angstrom, in-plane radius where coupling hits 0
    double cutoff_width = 0.5;  // angstrom
    int num_orbitals_1 = 2;
    int num_orbitals_2 = 2;
    // Optional per-pair scale factors (defaults to 1 for every pair).
    std::vector<double> pair_scale;

    double scale(int a1, int a2) const
    {
        if (pair_scale.empty()) return 1.0;
        return pair_scale.at(static_cast<size_t>(a1) * num_orbitals_2 + a2);
    }
    /// Decay envelope constants such that |h(x)| <= c * exp(-gamma |x|).
    double envelope_c() const { return std::abs(t_perp) * std::exp(d / lambda); }
    double envelope_gamma() const { return 1.0 / lambda; }
};

/// h^{12}_{a1 a2}(x) for in-plane separation x; zero beyond the cutoff and
/// C^1 across the ramp.
double interlayer_value(const InterlayerModel& model, const Vector2d& x, int a1, int a2);

/// Full tight-binding parameter block read from a model file.
struct HoppingModel {
    std::vector<double> intralayer_shells;  // eV, shell 1..k
    std::vector<double> onsite;             // eV per orbital
    double intralayer_decay = 0.30;         // angstrom, bond-stretch decay length
    InterlayerModel interlayer;
};

/// Community-standard NN-only graphene preset, t1 = -2.7 eV. Interlayer
/// constants are illustrative defaults tuned to the usual TBG coupling scale.
HoppingModel nn_only_preset();

HoppingModel load_hopping_model(const std::string& path);
void save_hopping_model(const HoppingModel& model, const std::string& path);

}  // namespace moire

#endif
