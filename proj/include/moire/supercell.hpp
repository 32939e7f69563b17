#ifndef MOIRE_SUPERCELL_HPP
#define MOIRE_SUPERCELL_HPP

#include <string>
#include <vector>

#include "moire/geometry.hpp"
#include "moire/hopping.hpp"
#include "moire/relaxation.hpp"

namespace moire {

/// Real-space tight-binding Hamiltonian of a commensurate twisted supercell.
/// Uses the same hopping models as the momentum engine; displacements are
/// sampled at unit-cell origins with u1 = +u/2, u2 = -u/2.
struct SupercellHamiltonian {
    CommensurateCell cell;
    IntralayerModel intra1, intra2;
    InterlayerModel inter;
    DisplacementField u;  // empty when unrelaxed

    struct Atom {
        int layer;        // 1 or 2
        int orbital;
        Vector2i unit;    // monolayer cell index inside the supercell
        Vector2d pos;     // undisplaced in-plane position, angstrom
        Vector2d disp;    // in-plane displacement, angstrom
    };
    std::vector<Atom> atoms;

    // integer supercell coordinates: S = A_j * cells_j
    Eigen::Matrix2i cells1, cells2;

    int dim() const;
};

SupercellHamiltonian build_supercell(const CommensurateCell& cell, const HoppingModel& model,
                                     const DisplacementField* u);

/// Dense Hermitian Bloch matrix at momentum k, periodic gauge over supercell
/// translations. Throws when displaced atoms approach closer than 0.5 A.
MatrixXcd supercell_bloch(const SupercellHamiltonian& sc, const Vector2d& k);

Eigen::VectorXd supercell_eigenvalues(const SupercellHamiltonian& sc, const Vector2d& k);

/// Per-eigenvalue comparison of two sorted spectra restricted to
/// [-window, window].
struct SpectraComparison {
    double max_deviation = 0.0;       // eV
    std::vector<double> per_band;     // |oracle - kspace| per matched eigenvalue
    int bands_compared = 0;
    bool count_mismatch = false;
    int count_a = 0, count_b = 0;
    std::string note;
};

SpectraComparison compare_spectra(const Eigen::VectorXd& oracle, const Eigen::VectorXd& kspace,
                                  double window);

}  // namespace moire

#endif
