#include "moire/hamiltonian.hpp"

#include <cmath>
#include <stdexcept>

#include "moire/util.hpp"

namespace moire {

using cplx = std::complex<double>;

IntralayerTable build_intralayer_table(const IntralayerModel& model, const DisplacementField* u,
                                       const BilayerGeometry& geom, int layer, int gcut,
                                       int grid_n)
{
    if (layer != 1 && layer != 2) throw std::invalid_argument("build_intralayer_table: bad layer");
    const Lattice2D& own = geom.layer(layer);
    if (own.num_orbitals() != model.num_orbitals) {
        throw std::invalid_argument("build_intralayer_table: model/lattice orbital mismatch");
    }

    IntralayerTable table;
    table.layer = layer;
    table.norb = model.num_orbitals;
    table.gcut = gcut;
    table.terms = model.terms;
    table.onsite = model.onsite;
    table.rigid = (u == nullptr || u->empty());
    const int nt = static_cast<int>(model.terms.size());
    table.cell_vec.resize(nt);
    for (int t = 0; t < nt; ++t) {
        table.cell_vec[t] = own.basis * model.terms[t].cell.cast<double>();
    }

    if (table.rigid) {
        std::vector<cplx> c(nt);
        for (int t = 0; t < nt; ++t) c[t] = model.terms[t].amplitude;
        table.coeffs[{0, 0}] = std::move(c);
        return table;
    }

    const int gmax = u->gmax;
    const int content = gcut + 2 * gmax;
    int n = grid_n > 0 ? grid_n : std::max(24, 3 * content);
    if (n < 2 * content + 1) {
        throw std::invalid_argument("build_intralayer_table: grid too coarse for the Fourier "
                                    "content of u (aliasing)");
    }

    // sigma is the sign of both the layer's displacement and its Fourier
    // character on the moire-fractional configuration torus.
    const double sigma = (layer == 1) ? 1.0 : -1.0;
    const Matrix2d m_inv = geom.moire_cell.inverse();

    // 1D phase table e^{-2 pi i sigma g k / n} for g in [-gcut, gcut].
    std::vector<std::vector<cplx>> ph(2 * gcut + 1, std::vector<cplx>(n));
    for (int g = -gcut; g <= gcut; ++g) {
        for (int k = 0; k < n; ++k) {
            ph[g + gcut][k] = std::exp(cplx(0.0, -2.0 * M_PI * sigma * g * k / n));
        }
    }

    for (int gx = -gcut; gx <= gcut; ++gx) {
        for (int gy = -gcut; gy <= gcut; ++gy) {
            table.coeffs[{gx, gy}] = std::vector<cplx>(nt, cplx(0.0, 0.0));
        }
    }

    std::vector<double> fgrid(static_cast<size_t>(n) * n);
    for (int t = 0; t < nt; ++t) {
        const auto& term = model.terms[t];
        const Vector2d tau_ba =
            own.orbitals[term.orb_to].position - own.orbitals[term.orb_from].position;
        const Vector2d x0 = table.cell_vec[t] + tau_ba;
        const Vector2d delta_frac = m_inv * table.cell_vec[t];
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < n; ++k) {
                Vector2d s(static_cast<double>(i) / n, static_cast<double>(k) / n);
                Vector2d d = 0.5 * sigma * (u->eval_frac(s) - u->eval_frac(s - delta_frac));
                double r = (x0 + d).norm();
                fgrid[static_cast<size_t>(i) * n + k] =
                    term.amplitude * std::exp(-(r - term.r0) / model.decay_length);
            }
        }
        // Separable DFT: rows first, then columns.
        std::vector<std::vector<cplx>> row(2 * gcut + 1, std::vector<cplx>(n, cplx(0, 0)));
        for (int gy = -gcut; gy <= gcut; ++gy) {
            auto& dst = row[gy + gcut];
            for (int i = 0; i < n; ++i) {
                cplx acc(0, 0);
                for (int k = 0; k < n; ++k) {
                    acc += fgrid[static_cast<size_t>(i) * n + k] * ph[gy + gcut][k];
                }
                dst[i] = acc;
            }
        }
        const double inv_n2 = 1.0 / (static_cast<double>(n) * n);
        for (int gx = -gcut; gx <= gcut; ++gx) {
            for (int gy = -gcut; gy <= gcut; ++gy) {
                cplx acc(0, 0);
                for (int i = 0; i < n; ++i) acc += row[gy + gcut][i] * ph[gx + gcut][i];
                table.coeffs[{gx, gy}][t] = acc * inv_n2;
            }
        }
    }
    return table;
}

std::map<std::pair<int, int>, MatrixXcd> intralayer_block(const IntralayerTable& table,
                                                          const Vector2d& q_total)
{
    std::map<std::pair<int, int>, MatrixXcd> out;
    const int nt = static_cast<int>(table.terms.size());
    std::vector<cplx> phase(nt);
    for (int t = 0; t < nt; ++t) {
        phase[t] = std::exp(cplx(0.0, q_total.dot(table.cell_vec[t])));
    }
    for (const auto& [g, c] : table.coeffs) {
        MatrixXcd m = MatrixXcd::Zero(table.norb, table.norb);
        for (int t = 0; t < nt; ++t) {
            m(table.terms[t].orb_from, table.terms[t].orb_to) += phase[t] * c[t];
        }
        if (g.first == 0 && g.second == 0) {
            for (int a = 0; a < table.norb; ++a) m(a, a) += table.onsite[a];
        }
        out[g] = std::move(m);
    }
    return out;
}

namespace {

struct Site {
    int layer;
    Vector2i n;
    Vector2d g;
    int start;  // first matrix index
    int norb;
};

std::vector<Site> group_sites(const MomentumBasis& basis)
{
    std::vector<Site> sites;
    int i = 0;
    const int total = basis.size();
    while (i < total) {
        const auto& e = basis.elements[i];
        int j = i;
        while (j < total && basis.elements[j].layer == e.layer && basis.elements[j].n == e.n) ++j;
        sites.push_back({e.layer, e.n, e.G, i, j - i});
        i = j;
    }
    return sites;
}

}  // namespace

KHamiltonian assemble(const Vector2d& q, const MomentumBasis& basis,
                      const IntralayerTable& table1, const IntralayerTable& table2,
                      const SampledInterlayerCoupling& coupling, double inter_scale, int threads,
                      long* outside_count)
{
    const std::vector<Site> sites = group_sites(basis);
    const int dim = basis.size();
    KHamiltonian kh;
    kh.q = q;
    kh.matrix = Eigen::MatrixXcd::Zero(dim, dim);
    auto& h = kh.matrix;

    const int nsites = static_cast<int>(sites.size());
    std::vector<long> outside(nsites, 0);

    parallel_for(nsites, threads, [&](int ci) {
        const Site& col = sites[ci];
        const IntralayerTable& table = (col.layer == 1) ? table1 : table2;
        const Vector2d q_col = q + col.g;
        const int nt = static_cast<int>(table.terms.size());
        std::vector<cplx> phase(nt);
        for (int t = 0; t < nt; ++t) {
            phase[t] = std::exp(cplx(0.0, q_col.dot(table.cell_vec[t])));
        }

        for (const Site& row : sites) {
            if (row.layer == col.layer) {
                const Vector2i g = row.n - col.n;
                if (std::abs(g.x()) <= table.gcut && std::abs(g.y()) <= table.gcut) {
                    const auto* c = table.offset(g.x(), g.y());
                    if (c) {
                        for (int t = 0; t < nt; ++t) {
                            h(row.start + table.terms[t].orb_from,
                              col.start + table.terms[t].orb_to) += phase[t] * (*c)[t];
                        }
                    }
                }
                if (g.x() == 0 && g.y() == 0) {
                    for (int a = 0; a < row.norb; ++a) {
                        h(row.start + a, col.start + a) += table.onsite[a];
                    }
                }
            } else {
                // Radial truncation weight from this entry's own momentum
                // argument; the sampled values are stored unweighted.
                const Vector2d xi = q + row.g + col.g;
                const double chi = chi_tau(xi.norm(), coupling.tau, coupling.chi_width);
                if (chi == 0.0) continue;
                bool out = false;
                Eigen::MatrixXcd m = interpolate_coupling_matrix(coupling, xi, &out);
                if (out) {
                    ++outside[ci];
                    continue;
                }
                m *= inter_scale * chi;
                if (row.layer == 1) {
                    for (int a = 0; a < row.norb; ++a) {
                        for (int b = 0; b < col.norb; ++b) {
                            h(row.start + a, col.start + b) += m(a, b);
                        }
                    }
                } else {
                    // layer-2 row, layer-1 column: Hermitian partner of the
                    // stored 1->2 coupling.
                    for (int a = 0; a < col.norb; ++a) {
                        for (int b = 0; b < row.norb; ++b) {
                            h(row.start + b, col.start + a) += std::conj(m(a, b));
                        }
                    }
                }
            }
        }
    });

    if (outside_count) {
        for (long c : outside) *outside_count += c;
    }
    return kh;
}

Vector2d valley_anchor(const BilayerGeometry& geom, int sign)
{
    Vector2d k = 0.5 * (dirac_momentum(geom.layer1) + dirac_momentum(geom.layer2));
    return (sign >= 0 ? 1.0 : -1.0) * k;
}

double default_lambda(const BilayerGeometry& geom)
{
    return std::min(6.0 * geom.moire_g_length(), 0.95 * homotopy_limit(geom));
}

double default_tau(const BilayerGeometry& geom)
{
    return 2.5 * std::min(reciprocal(geom.layer1).basis.col(0).norm(),
                          reciprocal(geom.layer2).basis.col(0).norm());
}

Engine build_engine(const BilayerGeometry& geom, const HoppingModel& model,
                    const DisplacementField* u, const EngineOptions& opts,
                    SampledInterlayerCoupling* coupling_cache)
{
    Engine e;
    e.geom = geom;
    e.inter_scale = opts.inter_scale;
    e.threads = std::max(1, opts.threads);

    e.intra1 = build_shell_model(geom.layer1, model.intralayer_shells, model.onsite);
    e.intra2 = build_shell_model(geom.layer2, model.intralayer_shells, model.onsite);
    e.intra1.decay_length = model.intralayer_decay;
    e.intra2.decay_length = model.intralayer_decay;
    e.inter = model.interlayer;
    e.inter.num_orbitals_1 = geom.layer1.num_orbitals();
    e.inter.num_orbitals_2 = geom.layer2.num_orbitals();

    const bool relaxed = (u != nullptr && !u->empty());
    if (relaxed) e.u = *u;

    const double lambda = opts.lambda > 0.0 ? opts.lambda : default_lambda(geom);
    const double tau = opts.tau > 0.0 ? opts.tau : default_tau(geom);

    const Vector2d anchor = valley_anchor(geom, opts.valley_sign);
    e.basis = build_basis(geom, lambda, anchor);

    const int gcut = opts.gcut > 0 ? opts.gcut : (relaxed ? e.u.gmax + 2 : 0);
    e.table1 = build_intralayer_table(e.intra1, relaxed ? &e.u : nullptr, geom, 1, gcut,
                                      opts.grid_n);
    e.table2 = build_intralayer_table(e.intra2, relaxed ? &e.u : nullptr, geom, 2, gcut,
                                      opts.grid_n);

    if (coupling_cache) {
        e.coupling = std::move(*coupling_cache);
    } else {
        // Island coverage: every interlayer query xi = q + G + G' sits within
        // lambda of an island center for q in the moire cell around the
        // valley; the extra margin keeps interpolation stencils interior.
        const double coverage = lambda + 2.5 * geom.moire_g_length();
        e.coupling = sample_interlayer(e.inter, relaxed ? &e.u : nullptr, geom, tau, anchor,
                                       coverage, opts.mesh, e.threads);
    }
    return e;
}

KHamiltonian hamiltonian_at(const Engine& engine, const Vector2d& q, long* outside_count)
{
    return assemble(q, engine.basis, engine.table1, engine.table2, engine.coupling,
                    engine.inter_scale, engine.threads, outside_count);
}

Eigen::VectorXd eigenvalues_at(const Engine& engine, const Vector2d& q)
{
    KHamiltonian kh = hamiltonian_at(engine, q);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(kh.matrix,
                                                           Eigen::EigenvaluesOnly);
    return solver.eigenvalues();
}

}  // namespace moire
