#include "moire/supercell.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

namespace moire {

using cplx = std::complex<double>;

int SupercellHamiltonian::dim() const { return static_cast<int>(atoms.size()); }

static Eigen::Matrix2i integer_cells(const Matrix2d& layer_basis, const Matrix2d& super_basis)
{
    Matrix2d c = layer_basis.inverse() * super_basis;
    Eigen::Matrix2i ci;
    for (int r = 0; r < 2; ++r) {
        for (int k = 0; k < 2; ++k) {
            ci(r, k) = static_cast<int>(std::lround(c(r, k)));
            if (std::abs(c(r, k) - ci(r, k)) > 1e-8) {
                throw std::invalid_argument("build_supercell: supercell not commensurate with layer");
            }
        }
    }
    return ci;
}

static long long floordiv(long long a, long long b)
{
    long long q = a / b, r = a % b;
    return (r != 0 && (r < 0) != (b < 0)) ? q - 1 : q;
}

/// Canonical representatives of Z^2 / C Z^2, exact integer arithmetic.
static std::vector<Vector2i> residues(const Eigen::Matrix2i& c)
{
    const long long det = static_cast<long long>(c(0, 0)) * c(1, 1) -
                          static_cast<long long>(c(0, 1)) * c(1, 0);
    if (det == 0) throw std::invalid_argument("build_supercell: singular cell matrix");
    const long long count = std::llabs(det);
    // adj(C) * v / det = C^{-1} v
    auto canonical = [&](long long x, long long y) -> Vector2i {
        const long long fx = c(1, 1) * x - c(0, 1) * y;
        const long long fy = -c(1, 0) * x + c(0, 0) * y;
        const long long ax = floordiv(det > 0 ? fx : -fx, count);
        const long long ay = floordiv(det > 0 ? fy : -fy, count);
        return Vector2i(static_cast<int>(x - c(0, 0) * ax - c(0, 1) * ay),
                        static_cast<int>(y - c(1, 0) * ax - c(1, 1) * ay));
    };
    std::set<std::pair<int, int>> seen;
    std::vector<Vector2i> out;
    const int reach = 2 * static_cast<int>(c.cwiseAbs().maxCoeff()) + 2;
    for (int i = -reach; i <= reach && static_cast<long long>(out.size()) < count; ++i) {
        for (int j = -reach; j <= reach && static_cast<long long>(out.size()) < count; ++j) {
            Vector2i r = canonical(i, j);
            if (seen.insert({r.x(), r.y()}).second) out.push_back(r);
        }
    }
    if (static_cast<long long>(out.size()) != count) {
        throw std::runtime_error("build_supercell: residue enumeration incomplete");
    }
    std::sort(out.begin(), out.end(), [](const Vector2i& a, const Vector2i& b) {
        return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
    });
    return out;
}

SupercellHamiltonian build_supercell(const CommensurateCell& cell, const HoppingModel& model,
                                     const DisplacementField* u)
{
    SupercellHamiltonian sc;
    sc.cell = cell;
    sc.intra1 = build_shell_model(cell.geom.layer1, model.intralayer_shells, model.onsite);
    sc.intra2 = build_shell_model(cell.geom.layer2, model.intralayer_shells, model.onsite);
    sc.intra1.decay_length = model.intralayer_decay;
    sc.intra2.decay_length = model.intralayer_decay;
    sc.inter = model.interlayer;
    sc.inter.num_orbitals_1 = cell.geom.layer1.num_orbitals();
    sc.inter.num_orbitals_2 = cell.geom.layer2.num_orbitals();
    const bool relaxed = (u != nullptr && !u->empty());
    if (relaxed) sc.u = *u;

    sc.cells1 = integer_cells(cell.geom.layer1.basis, cell.supercell.basis);
    sc.cells2 = integer_cells(cell.geom.layer2.basis, cell.supercell.basis);

    const Matrix2d m_inv = cell.geom.moire_cell.inverse();
    for (int layer = 1; layer <= 2; ++layer) {
        const Lattice2D& lat = cell.geom.layer(layer);
        const double sigma = layer == 1 ? 0.5 : -0.5;
        for (const Vector2i& unit : residues(layer == 1 ? sc.cells1 : sc.cells2)) {
            const Vector2d origin = lat.basis * unit.cast<double>();
            Vector2d disp = Vector2d::Zero();
            if (relaxed) disp = sigma * sc.u.eval_frac(m_inv * origin);
            for (int a = 0; a < lat.num_orbitals(); ++a) {
                sc.atoms.push_back({layer, a, unit, origin + lat.orbitals[a].position, disp});
            }
        }
    }
    if (static_cast<int>(sc.atoms.size()) != cell.atom_count) {
        throw std::runtime_error("build_supercell: atom count mismatch");
    }
    return sc;
}

MatrixXcd supercell_bloch(const SupercellHamiltonian& sc, const Vector2d& k)
{
    const int dim = sc.dim();
    MatrixXcd h = MatrixXcd::Zero(dim, dim);

    // shell-term lookup per layer: (cell offset, orb pair) -> (amplitude, r0)
    std::map<std::tuple<int, int, int, int>, std::pair<double, double>> terms[2];
    for (int layer = 0; layer < 2; ++layer) {
        const IntralayerModel& m = layer == 0 ? sc.intra1 : sc.intra2;
        for (const auto& t : m.terms) {
            terms[layer][{t.cell.x(), t.cell.y(), t.orb_from, t.orb_to}] = {t.amplitude, t.r0};
        }
    }
    double max_r0 = 0.0;
    for (const auto& t : sc.intra1.terms) max_r0 = std::max(max_r0, t.r0);
    for (const auto& t : sc.intra2.terms) max_r0 = std::max(max_r0, t.r0);

    const Matrix2d s = sc.cell.supercell.basis;
    double diam = 0.0;
    for (const auto& a : sc.atoms) diam = std::max(diam, a.pos.norm());
    const double reach_r = std::max(max_r0, sc.inter.cutoff) + 2.0 * diam + 2.0;
    const double smin = std::min(s.col(0).norm(), s.col(1).norm());
    const int reach = static_cast<int>(std::ceil(reach_r / smin)) + 1;

    const Eigen::Matrix2i cells[2] = {sc.cells1, sc.cells2};
    for (int p = 0; p < dim; ++p) {
        const auto& ap = sc.atoms[p];
        const Vector2d xp = ap.pos + ap.disp;
        for (int q = 0; q < dim; ++q) {
            const auto& aq = sc.atoms[q];
            for (int ti = -reach; ti <= reach; ++ti) {
                for (int tj = -reach; tj <= reach; ++tj) {
                    const Vector2d t_vec = s * Vector2d(ti, tj);
                    const Vector2d xq = aq.pos + t_vec + aq.disp;
                    const cplx phase = std::exp(cplx(0.0, k.dot(t_vec)));
                    if (ap.layer == aq.layer) {
                        const Eigen::Matrix2i& c = cells[ap.layer - 1];
                        const Vector2i off =
                            aq.unit + c * Vector2i(ti, tj) - ap.unit;
                        auto it = terms[ap.layer - 1].find(
                            {off.x(), off.y(), ap.orbital, aq.orbital});
                        if (it == terms[ap.layer - 1].end()) continue;
                        const double r = (xq - xp).norm();
                        if (r < 0.5) {
                            throw std::runtime_error(
                                "supercell_bloch: displaced atoms closer than 0.5 A");
                        }
                        const IntralayerModel& m = ap.layer == 1 ? sc.intra1 : sc.intra2;
                        const double val =
                            it->second.first * std::exp(-(r - it->second.second) / m.decay_length);
                        h(p, q) += val * phase;
                    } else {
                        const int a1 = ap.layer == 1 ? ap.orbital : aq.orbital;
                        const int a2 = ap.layer == 1 ? aq.orbital : ap.orbital;
                        const double val = interlayer_value(sc.inter, xq - xp, a1, a2);
                        if (val != 0.0) h(p, q) += val * phase;
                    }
                }
            }
        }
        h(p, p) += (ap.layer == 1 ? sc.intra1 : sc.intra2).onsite[ap.orbital];
    }
    return h;
}

Eigen::VectorXd supercell_eigenvalues(const SupercellHamiltonian& sc, const Vector2d& k)
{
    Eigen::SelfAdjointEigenSolver<MatrixXcd> solver(supercell_bloch(sc, k),
                                                    Eigen::EigenvaluesOnly);
    return solver.eigenvalues();
}

SpectraComparison compare_spectra(const Eigen::VectorXd& oracle, const Eigen::VectorXd& kspace,
                                  double window)
{
    auto in_window = [&](const Eigen::VectorXd& v) {
        std::vector<double> out;
        for (int i = 0; i < v.size(); ++i) {
            if (std::abs(v(i)) <= window) out.push_back(v(i));
        }
        return out;
    };
    std::vector<double> a = in_window(oracle), b = in_window(kspace);
    SpectraComparison cmp;
    cmp.count_a = static_cast<int>(a.size());
    cmp.count_b = static_cast<int>(b.size());
    cmp.count_mismatch = (cmp.count_a != cmp.count_b);
    if (cmp.count_mismatch) {
        cmp.note = "eigenvalue counts differ inside the window (" + std::to_string(cmp.count_a) +
                   " vs " + std::to_string(cmp.count_b) + ")";
    }
    cmp.bands_compared = static_cast<int>(std::min(a.size(), b.size()));
    for (int i = 0; i < cmp.bands_compared; ++i) {
        const double d = std::abs(a[i] - b[i]);
        cmp.per_band.push_back(d);
        cmp.max_deviation = std::max(cmp.max_deviation, d);
    }
    return cmp;
}

}  // namespace moire
