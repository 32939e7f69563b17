#include "moire/momentum_basis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "moire/util.hpp"

namespace moire {

using json = nlohmann::json;
using cplx = std::complex<double>;

static double shortest_nonzero(const Matrix2d& basis)
{
    double best = std::numeric_limits<double>::max();
    for (int i = -2; i <= 2; ++i) {
        for (int j = -2; j <= 2; ++j) {
            if (i == 0 && j == 0) continue;
            best = std::min(best, (basis * Vector2d(i, j)).norm());
        }
    }
    return best;
}

double homotopy_limit(const BilayerGeometry& geom)
{
    const double g1 = shortest_nonzero(reciprocal(geom.layer1).basis);
    const double g2 = shortest_nonzero(reciprocal(geom.layer2).basis);
    return 0.5 * std::min(g1, g2);
}

MomentumBasis build_basis(const BilayerGeometry& geom, double lambda, const Vector2d& valley)
{
    if (lambda <= 0.0) throw std::invalid_argument("build_basis: lambda must be positive");
    const double limit = homotopy_limit(geom);
    if (lambda >= limit) {
        throw std::invalid_argument(
            "build_basis: lambda " + std::to_string(lambda) +
            " reaches across the monolayer reciprocal cell (limit " + std::to_string(limit) +
            "); the retained momenta region would wrap the torus");
    }

    MomentumBasis basis;
    basis.lambda = lambda;
    basis.valley = valley;

    const Matrix2d& theta = geom.theta_matrix;
    Eigen::JacobiSVD<Matrix2d> svd(theta);
    const double sigma_min = svd.singularValues()(1);
    const int reach = static_cast<int>(std::ceil(lambda / sigma_min)) + 1;

    const Matrix2d g_other[2] = {reciprocal(geom.layer2).basis, reciprocal(geom.layer1).basis};
    for (int layer = 1; layer <= 2; ++layer) {
        const int norb = geom.layer(layer).num_orbitals();
        for (int nx = -reach; nx <= reach; ++nx) {
            for (int ny = -reach; ny <= reach; ++ny) {
                Vector2i n(nx, ny);
                if ((theta * n.cast<double>()).norm() >= lambda) continue;
                Vector2d g = g_other[layer - 1] * n.cast<double>();
                for (int a = 0; a < norb; ++a) {
                    basis.elements.push_back({layer, n, g, a});
                }
            }
        }
    }
    return basis;
}

static double quintic_ramp(double t)
{
    if (t <= 0.0) return 1.0;
    if (t >= 1.0) return 0.0;
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

double chi_tau(double g_norm, double tau, double width)
{
    if (g_norm >= tau) return 0.0;
    const double start = tau - width;
    if (g_norm <= start) return 1.0;
    return quintic_ramp((g_norm - start) / width);
}

SampledInterlayerCoupling sample_interlayer(const InterlayerModel& model,
                                            const DisplacementField* u,
                                            const BilayerGeometry& geom, double tau,
                                            const Vector2d& anchor, double coverage,
                                            MeshSpec mesh, int threads)
{
    if (tau <= 0.0) throw std::invalid_argument("sample_interlayer: tau must be positive");
    if (coverage <= 0.0) {
        // Default fine radius: the widest basis the geometry admits plus a
        // stencil margin, so every interlayer query of such a basis lands on
        // sampled ground.
        coverage = std::min(6.0 * geom.moire_g_length(), 0.95 * homotopy_limit(geom)) +
                   2.5 * shortest_nonzero(geom.theta_matrix);
    }

    SampledInterlayerCoupling s;
    s.tau = tau;
    s.coverage = coverage;
    s.anchor = anchor;
    s.b1 = reciprocal(geom.layer1).basis;
    s.b2 = reciprocal(geom.layer2).basis;
    s.theta = geom.theta_matrix;
    s.norb1 = geom.layer1.num_orbitals();
    s.norb2 = geom.layer2.num_orbitals();
    s.relaxed = (u != nullptr && !u->empty());
    if (s.norb1 != model.num_orbitals_1 || s.norb2 != model.num_orbitals_2) {
        throw std::invalid_argument("sample_interlayer: model/geometry orbital count mismatch");
    }

    const double a = geom.layer1.basis.col(0).norm();
    const double spacing = mesh.spacing > 0.0 ? mesh.spacing : a / 12.0;
    const double max_shift = s.relaxed ? u->max_norm() : 0.0;
    const double extent = mesh.extent > 0.0 ? mesh.extent : 1.5 * model.cutoff + max_shift;
    if (extent < model.cutoff + max_shift) {
        throw std::invalid_argument("sample_interlayer: mesh extent below the coupling range");
    }
    // Largest |xi| we transform at, vs the mesh reciprocal cell (triangular
    // lattice, shortest dual vector 4*pi/(sqrt(3)*spacing)). Alias images sit
    // at least (nyquist - xi_max) away, where the transform has decayed like
    // exp(-d * dxi); an 8 A^-1 margin puts that below 1e-11 for d ~ 3.35 A.
    const double xi_max = tau + 2.0 * coverage;
    const double mesh_nyquist = 4.0 * M_PI / (std::sqrt(3.0) * spacing);
    if (mesh_nyquist < xi_max + 8.0) {
        throw std::invalid_argument("sample_interlayer: mesh spacing too coarse for tau (aliasing)");
    }
    s.spacing = spacing;
    s.extent = extent;

    for (int a1 = 0; a1 < s.norb1; ++a1) {
        for (int a2 = 0; a2 < s.norb2; ++a2) {
            s.delta.push_back(geom.layer1.orbitals[a1].position - geom.layer2.orbitals[a2].position);
        }
    }

    // Triangular real-space mesh.
    const Vector2d v1(spacing, 0.0), v2(0.5 * spacing, 0.5 * std::sqrt(3.0) * spacing);
    const int reach = static_cast<int>(std::ceil(extent / (spacing * 0.5 * std::sqrt(3.0)))) + 2;
    std::vector<Vector2d> pts;
    for (int i = -reach; i <= reach; ++i) {
        for (int j = -reach; j <= reach; ++j) {
            Vector2d y = i * v1 + j * v2;
            if (y.norm() <= extent) pts.push_back(y);
        }
    }
    const int npts = static_cast<int>(pts.size());
    const double weight = spacing * spacing * 0.5 * std::sqrt(3.0);
    const double norm = weight / std::sqrt(geom.layer1.cell_area() * geom.layer2.cell_area());

    // Per-pair aligned kernel on the mesh: k(y + u_rel(y - Delta)) where
    // u_rel(x) = (u1 - u2) represented on the common position, i.e.
    // 0.5*(u(A2^{-1}x) + u(A1^{-1}x)) in fractional arguments.
    const Matrix2d a1_inv = geom.layer1.basis.inverse();
    const Matrix2d a2_inv = geom.layer2.basis.inverse();
    auto u_rel = [&](const Vector2d& x) -> Vector2d {
        if (!s.relaxed) return Vector2d::Zero();
        return 0.5 * (u->eval_frac(a2_inv * x) + u->eval_frac(a1_inv * x));
    };
    const int npairs = s.norb1 * s.norb2;
    std::vector<std::vector<double>> field(npairs, std::vector<double>(npts));
    parallel_for(npairs, threads, [&](int p) {
        const int a1 = p / s.norb2, a2 = p % s.norb2;
        const Vector2d d = s.delta[p];
        for (int i = 0; i < npts; ++i) {
            field[p][i] = interlayer_value(model, pts[i] + u_rel(pts[i] - d), a1, a2);
        }
    });

    // Nested-grid momenta: islands at the coarse positions anchor + b1 * t
    // (t = n + m), fine offsets theta * n inside the coverage radius. An
    // island is kept while any of its points can carry weight under the
    // radial truncation chi_tau(|xi|), i.e. its center lies within
    // tau + coverage of the origin.
    Eigen::JacobiSVD<Matrix2d> svd_fine(s.theta);
    const double fine_min = svd_fine.singularValues()(1);
    const int fine_reach = static_cast<int>(std::ceil(coverage / fine_min)) + 1;
    std::vector<Vector2i> fine;
    for (int i = -fine_reach; i <= fine_reach; ++i) {
        for (int j = -fine_reach; j <= fine_reach; ++j) {
            Vector2i v(i, j);
            if ((s.theta * v.cast<double>()).norm() < coverage) fine.push_back(v);
        }
    }

    Eigen::JacobiSVD<Matrix2d> svd_coarse(s.b1);
    const double coarse_min = svd_coarse.singularValues()(1);
    const int coarse_reach =
        static_cast<int>(std::ceil((tau + coverage + anchor.norm()) / coarse_min)) + 1;
    std::vector<Vector2i> islands;
    for (int i = -coarse_reach; i <= coarse_reach; ++i) {
        for (int j = -coarse_reach; j <= coarse_reach; ++j) {
            Vector2i v(i, j);
            if ((anchor + s.b1 * v.cast<double>()).norm() < tau + coverage) islands.push_back(v);
        }
    }

    const int nfine = static_cast<int>(fine.size());
    s.samples.resize(islands.size() * fine.size());
    parallel_for(static_cast<int>(s.samples.size()), threads, [&](int idx) {
        auto& smp = s.samples[idx];
        smp.n = fine[idx % nfine];
        smp.m = islands[idx / nfine] - smp.n;
        smp.xi = anchor + s.b2 * smp.n.cast<double>() + s.b1 * smp.m.cast<double>();
        smp.chi = chi_tau(smp.xi.norm(), tau, s.chi_width);
        smp.untouched = (smp.chi == 1.0);
        std::vector<cplx> phase(npts);
        for (int i = 0; i < npts; ++i) {
            phase[i] = std::exp(cplx(0.0, -smp.xi.dot(pts[i])));
        }
        // chi is NOT folded into the stored values; the assembly applies it
        // from the query's own xi. The interpolation stencil then works on
        // the raw transform, which is smooth in xi.
        smp.values.resize(s.norb1, s.norb2);
        for (int p = 0; p < npairs; ++p) {
            cplx acc(0.0, 0.0);
            const auto& f = field[p];
            for (int i = 0; i < npts; ++i) acc += f[i] * phase[i];
            smp.values(p / s.norb2, p % s.norb2) = norm * acc;
        }
    });

    s.build_index();
    return s;
}

SampledInterlayerCoupling retruncate(const SampledInterlayerCoupling& s, double new_tau)
{
    if (new_tau > s.tau) {
        throw std::invalid_argument("retruncate: new tau exceeds the sampled tau");
    }
    SampledInterlayerCoupling out = s;
    out.tau = new_tau;
    for (auto& smp : out.samples) {
        smp.chi = chi_tau(smp.xi.norm(), new_tau, s.chi_width);
        smp.untouched = (smp.chi == 1.0);
    }
    return out;
}

static long long hash_key(int ix, int iy)
{
    return (static_cast<long long>(ix) << 32) ^ (static_cast<unsigned int>(iy));
}

void SampledInterlayerCoupling::build_index()
{
    fine_len = shortest_nonzero(theta);
    hash_cell = fine_len;
    grid.clear();
    xi_min = Vector2d::Constant(std::numeric_limits<double>::max());
    xi_max = Vector2d::Constant(std::numeric_limits<double>::lowest());
    for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
        int ix = static_cast<int>(std::floor(samples[i].xi.x() / hash_cell));
        int iy = static_cast<int>(std::floor(samples[i].xi.y() / hash_cell));
        grid[hash_key(ix, iy)].push_back(i);
        xi_min = xi_min.cwiseMin(samples[i].xi);
        xi_max = xi_max.cwiseMax(samples[i].xi);
    }
}

std::vector<int> SampledInterlayerCoupling::nearby(const Vector2d& xi) const
{
    std::vector<int> out;
    const int cx = static_cast<int>(std::floor(xi.x() / hash_cell));
    const int cy = static_cast<int>(std::floor(xi.y() / hash_cell));
    for (int r = 2; r <= 3 && out.size() < 6; ++r) {
        out.clear();
        for (int ix = cx - r; ix <= cx + r; ++ix) {
            for (int iy = cy - r; iy <= cy + r; ++iy) {
                auto it = grid.find(hash_key(ix, iy));
                if (it == grid.end()) continue;
                out.insert(out.end(), it->second.begin(), it->second.end());
            }
        }
    }
    return out;
}

Eigen::MatrixXcd interpolate_coupling_matrix(const SampledInterlayerCoupling& s,
                                             const Vector2d& xi, bool* outside)
{
    if (outside) *outside = false;
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(s.norb1, s.norb2);
    const double margin = 1.2 * s.fine_len;
    if ((xi.array() < s.xi_min.array() - margin).any() ||
        (xi.array() > s.xi_max.array() + margin).any()) {
        if (outside) *outside = true;
        return out;
    }
    std::vector<int> cand = s.nearby(xi);
    std::vector<std::pair<double, int>> dist;
    dist.reserve(cand.size());
    for (int i : cand) dist.push_back({(s.samples[i].xi - xi).norm(), i});
    std::sort(dist.begin(), dist.end());
    // Distinct nested-grid indices can alias onto the same xi when the twist
    // is commensurate (overlapping islands); duplicates carry identical
    // values and only degrade the fit, so keep one point per location.
    std::vector<std::pair<double, int>> uniq;
    for (const auto& d : dist) {
        bool dup = false;
        for (const auto& kept : uniq) {
            if ((s.samples[d.second].xi - s.samples[kept.second].xi).norm() <
                0.05 * s.fine_len) {
                dup = true;
                break;
            }
        }
        if (!dup) uniq.push_back(d);
        if (uniq.size() >= 16) break;
    }
    dist.swap(uniq);

    // A query farther than ~1 fine-lattice step from every sample is outside
    // the sampled islands: the tau truncation sets it to zero.
    if (dist.empty() || dist[0].first > 1.2 * s.fine_len) {
        if (outside) *outside = true;
        return out;
    }

    const int npairs = s.norb1 * s.norb2;
    const int avail = static_cast<int>(dist.size());
    auto fill = [&](const Eigen::VectorXcd& vals) {
        for (int p = 0; p < npairs; ++p) {
            out(p / s.norb2, p % s.norb2) =
                vals(p) * std::exp(cplx(0.0, xi.dot(s.delta[p])));
        }
    };

    // Exactly on a sample node the stored transform is the answer; a fit
    // through the neighborhood would only add stencil noise.
    if (dist[0].first < 1e-9 * s.fine_len) {
        Eigen::VectorXcd vals(npairs);
        const auto& smp = s.samples[dist[0].second];
        for (int p = 0; p < npairs; ++p) vals(p) = smp.values(p / s.norb2, p % s.norb2);
        fill(vals);
        return out;
    }

    // Moving least squares: distance-weighted polynomial fit over the nearest
    // points. A minimum-norm solve keeps the constant term bounded even when
    // the stencil is degenerate (symmetric queries sit at midpoints of the
    // sample lattice and make an exact 6-point fit nearly rank-deficient).
    auto fit = [&](int k, int ncoef) -> bool {
        Eigen::MatrixXd P(k, ncoef);
        Eigen::MatrixXd re(k, npairs), im(k, npairs);
        for (int r = 0; r < k; ++r) {
            const auto& smp = s.samples[dist[r].second];
            const Vector2d t = (smp.xi - xi) / s.fine_len;
            const double w = std::exp(-0.5 * t.squaredNorm());
            P(r, 0) = w;
            if (ncoef > 1) { P(r, 1) = w * t.x(); P(r, 2) = w * t.y(); }
            if (ncoef > 3) {
                P(r, 3) = w * t.x() * t.x();
                P(r, 4) = w * t.x() * t.y();
                P(r, 5) = w * t.y() * t.y();
            }
            for (int p = 0; p < npairs; ++p) {
                cplx v = smp.values(p / s.norb2, p % s.norb2);
                re(r, p) = w * v.real();
                im(r, p) = w * v.imag();
            }
        }
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
        cod.setThreshold(1e-8);
        cod.compute(P);
        if (cod.rank() < 1) return false;
        Eigen::MatrixXd cre = cod.solve(re), cim = cod.solve(im);
        Eigen::VectorXcd vals(npairs);
        for (int p = 0; p < npairs; ++p) vals(p) = cplx(cre(0, p), cim(0, p));
        fill(vals);
        return true;
    };

    if (avail >= 6 && fit(std::min(avail, 12), 6)) return out;
    if (avail >= 3 && fit(std::min(avail, 6), 3)) return out;

    Eigen::VectorXcd vals(npairs);
    const auto& smp = s.samples[dist[0].second];
    for (int p = 0; p < npairs; ++p) vals(p) = smp.values(p / s.norb2, p % s.norb2);
    fill(vals);
    return out;
}

std::complex<double> interpolate_coupling(const SampledInterlayerCoupling& s,
                                          const Vector2d& xi, int a1, int a2, bool* outside)
{
    return interpolate_coupling_matrix(s, xi, outside)(a1, a2);
}

static json mat2(const Matrix2d& m)
{
    return json::array({{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}});
}

static Matrix2d to_mat2(const json& j)
{
    Matrix2d m;
    m << j.at(0).at(0).get<double>(), j.at(0).at(1).get<double>(),
        j.at(1).at(0).get<double>(), j.at(1).at(1).get<double>();
    return m;
}

void save_coupling_cache(const SampledInterlayerCoupling& s, const std::string& path)
{
    json j;
    j["format"] = "moirems-coupling-cache";
    j["version"] = 2;
    j["tau"] = s.tau;
    j["chi_width"] = s.chi_width;
    j["coverage"] = s.coverage;
    j["anchor"] = {s.anchor.x(), s.anchor.y()};
    j["b1"] = mat2(s.b1);
    j["b2"] = mat2(s.b2);
    j["theta"] = mat2(s.theta);
    j["norb1"] = s.norb1;
    j["norb2"] = s.norb2;
    j["relaxed"] = s.relaxed;
    j["spacing"] = s.spacing;
    j["extent"] = s.extent;
    json deltas = json::array();
    for (const auto& d : s.delta) deltas.push_back({d.x(), d.y()});
    j["delta"] = deltas;
    json samples = json::array();
    for (const auto& smp : s.samples) {
        json v = json::array();
        for (int r = 0; r < s.norb1; ++r) {
            for (int c = 0; c < s.norb2; ++c) {
                v.push_back(smp.values(r, c).real());
                v.push_back(smp.values(r, c).imag());
            }
        }
        samples.push_back({{"n", {smp.n.x(), smp.n.y()}},
                           {"m", {smp.m.x(), smp.m.y()}},
                           {"chi", smp.chi},
                           {"values", v}});
    }
    j["samples"] = samples;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write coupling cache: " + path);
    out << j.dump() << "\n";
}

SampledInterlayerCoupling load_coupling_cache(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open coupling cache: " + path);
    json j = json::parse(in);
    if (j.value("format", "") != "moirems-coupling-cache" || j.value("version", 0) != 2) {
        throw std::runtime_error("unrecognized coupling cache format: " + path);
    }
    SampledInterlayerCoupling s;
    s.tau = j.at("tau").get<double>();
    s.chi_width = j.at("chi_width").get<double>();
    s.coverage = j.at("coverage").get<double>();
    s.anchor = Vector2d(j.at("anchor").at(0).get<double>(), j.at("anchor").at(1).get<double>());
    s.b1 = to_mat2(j.at("b1"));
    s.b2 = to_mat2(j.at("b2"));
    s.theta = to_mat2(j.at("theta"));
    s.norb1 = j.at("norb1").get<int>();
    s.norb2 = j.at("norb2").get<int>();
    s.relaxed = j.at("relaxed").get<bool>();
    s.spacing = j.at("spacing").get<double>();
    s.extent = j.at("extent").get<double>();
    for (const auto& d : j.at("delta")) {
        s.delta.push_back(Vector2d(d.at(0).get<double>(), d.at(1).get<double>()));
    }
    for (const auto& sj : j.at("samples")) {
        SampledInterlayerCoupling::Sample smp;
        smp.n = Vector2i(sj.at("n").at(0).get<int>(), sj.at("n").at(1).get<int>());
        smp.m = Vector2i(sj.at("m").at(0).get<int>(), sj.at("m").at(1).get<int>());
        smp.chi = sj.at("chi").get<double>();
        smp.untouched = (smp.chi == 1.0);
        smp.xi = s.anchor + s.b2 * smp.n.cast<double>() + s.b1 * smp.m.cast<double>();
        const auto& v = sj.at("values");
        smp.values.resize(s.norb1, s.norb2);
        int k = 0;
        for (int r = 0; r < s.norb1; ++r) {
            for (int c = 0; c < s.norb2; ++c) {
                smp.values(r, c) = cplx(v.at(k).get<double>(), v.at(k + 1).get<double>());
                k += 2;
            }
        }
        s.samples.push_back(std::move(smp));
    }
    s.build_index();
    return s;
}

}  // namespace moire
