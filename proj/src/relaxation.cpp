#include "moire/relaxation.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace moire {

using json = nlohmann::json;
using cplx = std::complex<double>;

GsfeModel GsfeModel::first_star(double c0, double c1)
{
    GsfeModel m;
    if (c0 != 0.0) m.coeffs.push_back({Vector2i(0, 0), c0});
    const Vector2i star[6] = {{1, 0}, {0, 1}, {-1, -1}, {-1, 0}, {0, -1}, {1, 1}};
    for (const auto& s : star) m.coeffs.push_back({s, c1});
    return m;
}

bool GsfeModel::is_constant() const
{
    for (const auto& [n, c] : coeffs) {
        if ((n.x() != 0 || n.y() != 0) && c != 0.0) return false;
    }
    return true;
}

static bool in_half_set(const Vector2i& n)
{
    return n.y() > 0 || (n.y() == 0 && n.x() > 0);
}

static std::vector<Vector2i> make_modes(int gmax)
{
    std::vector<Vector2i> modes;
    for (int j = -gmax; j <= gmax; ++j) {
        for (int i = -gmax; i <= gmax; ++i) {
            if (i == 0 && j == 0) continue;
            modes.emplace_back(i, j);
        }
    }
    return modes;
}

Vector2d DisplacementField::eval_frac(const Vector2d& t) const
{
    Vector2d u = Vector2d::Zero();
    for (size_t k = 0; k < modes.size(); ++k) {
        const double phase = 2.0 * M_PI * (modes[k].x() * t.x() + modes[k].y() * t.y());
        const cplx e(std::cos(phase), std::sin(phase));
        u.x() += (coeffs[k].x() * e).real();
        u.y() += (coeffs[k].y() * e).real();
    }
    return u;
}

Vector2d DisplacementField::layer_frac(int layer, const Vector2d& t) const
{
    if (layer == 1) return 0.5 * eval_frac(t);
    return -0.5 * eval_frac(-t);
}

double DisplacementField::max_norm(int samples) const
{
    double best = 0.0;
    for (int i = 0; i < samples; ++i) {
        for (int j = 0; j < samples; ++j) {
            Vector2d t(static_cast<double>(i) / samples, static_cast<double>(j) / samples);
            best = std::max(best, eval_frac(t).norm());
        }
    }
    return best;
}

double DisplacementField::coeff_l2() const
{
    double s = 0.0;
    for (const auto& c : coeffs) s += std::norm(c.x()) + std::norm(c.y());
    return std::sqrt(s);
}

DisplacementField zero_displacement(const BilayerGeometry& geom, int gmax)
{
    DisplacementField u;
    u.theta_basis = geom.theta_matrix;
    u.gmax = gmax;
    u.modes = make_modes(gmax);
    u.coeffs.assign(u.modes.size(), Vector2cd::Zero());
    return u;
}

VectorXd pack_field(const DisplacementField& u)
{
    std::vector<double> p;
    for (size_t k = 0; k < u.modes.size(); ++k) {
        if (!in_half_set(u.modes[k])) continue;
        p.push_back(u.coeffs[k].x().real());
        p.push_back(u.coeffs[k].x().imag());
        p.push_back(u.coeffs[k].y().real());
        p.push_back(u.coeffs[k].y().imag());
    }
    return Eigen::Map<VectorXd>(p.data(), static_cast<long>(p.size()));
}

void unpack_field(const VectorXd& params, DisplacementField& u)
{
    long idx = 0;
    for (size_t k = 0; k < u.modes.size(); ++k) {
        if (!in_half_set(u.modes[k])) continue;
        u.coeffs[k] = Vector2cd(cplx(params[idx], params[idx + 1]),
                                cplx(params[idx + 2], params[idx + 3]));
        idx += 4;
    }
    if (idx != params.size()) throw std::invalid_argument("unpack_field: size mismatch");
    // mirror the conjugate modes
    for (size_t k = 0; k < u.modes.size(); ++k) {
        if (in_half_set(u.modes[k])) continue;
        Vector2i neg = -u.modes[k];
        for (size_t l = 0; l < u.modes.size(); ++l) {
            if (u.modes[l] == neg) {
                u.coeffs[k] = u.coeffs[l].conjugate();
                break;
            }
        }
    }
}

namespace {

struct EnergyWorkspace {
    const GsfeModel& gsfe;
    const ElasticityTensor& elast;
    const BilayerGeometry& geom;
    int grid_n;
    Matrix2d b1, b2;  // layer reciprocal bases

    EnergyWorkspace(const GsfeModel& g, const ElasticityTensor& e, const BilayerGeometry& bg,
                    int n, int gmax)
        : gsfe(g), elast(e), geom(bg), grid_n(n)
    {
        int star = 1;
        for (const auto& [m, c] : gsfe.coeffs) star = std::max({star, std::abs(m.x()), std::abs(m.y())});
        const int content = 2 * gmax + 2 * star;
        if (grid_n == 0) grid_n = std::max(24, 2 * content);
        if (grid_n < content) {
            throw std::invalid_argument("total_energy: quadrature grid too coarse for the Fourier content");
        }
        b1 = reciprocal(geom.layer1).basis;
        b2 = reciprocal(geom.layer2).basis;
    }

    // GSFE energy density and (optionally) its derivative w.r.t. u at one point.
    double gsfe_density(const Vector2d& t, const Vector2d& u, Vector2d* force) const
    {
        double val = 0.0;
        if (force) *force = Vector2d::Zero();
        for (const auto& [m, c] : gsfe.coeffs) {
            const Vector2d g2 = b2 * m.cast<double>();
            const Vector2d g1 = b1 * m.cast<double>();
            const double ph = 2.0 * M_PI * (m.x() * t.x() + m.y() * t.y());
            // layer 1 term: exp(i 2 pi m.t) exp(i g2.u)
            const double a1 = ph + g2.dot(u);
            // layer 2 term: exp(-i 2 pi m.t) exp(-i g1.u)
            const double a2 = -ph - g1.dot(u);
            val += 0.5 * c * (std::cos(a1) + std::cos(a2));
            if (force) {
                *force += 0.5 * c * (-std::sin(a1) * g2 + std::sin(a2) * g1);
            }
        }
        return val;
    }

    double elastic_energy(const DisplacementField& u) const
    {
        double e = 0.0;
        for (size_t k = 0; k < u.modes.size(); ++k) {
            if (!in_half_set(u.modes[k])) continue;
            const Vector2d kv = u.theta_basis * u.modes[k].cast<double>();
            // Each layer carries the field u/2 over the full mode set; summing
            // both layers and folding conjugate modes onto the half set leaves
            // Q(a) + Q(b) per half mode.
            const Vector2d a(u.coeffs[k].x().real(), u.coeffs[k].y().real());
            const Vector2d b(u.coeffs[k].x().imag(), u.coeffs[k].y().imag());
            e += quad_form(kv, a) + quad_form(kv, b);
        }
        return e;
    }

    double quad_form(const Vector2d& k, const Vector2d& v) const
    {
        Matrix2d s = 0.5 * (k * v.transpose() + v * k.transpose());
        const double tr = s.trace();
        Matrix2d dev = s - 0.5 * tr * Matrix2d::Identity();
        return 0.5 * elast.bulk_K * tr * tr + elast.shear_G * dev.squaredNorm();
    }

    Vector2d quad_grad(const Vector2d& k, const Vector2d& v) const
    {
        Matrix2d s = 0.5 * (k * v.transpose() + v * k.transpose());
        Matrix2d dev = s - 0.5 * s.trace() * Matrix2d::Identity();
        return elast.bulk_K * k.dot(v) * k + 2.0 * elast.shear_G * dev * k;
    }
};

}  // namespace

double total_energy(const DisplacementField& u, const GsfeModel& gsfe,
                    const ElasticityTensor& elast, const BilayerGeometry& geom, int grid_n)
{
    EnergyWorkspace ws(gsfe, elast, geom, grid_n, u.gmax);
    const int n = ws.grid_n;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            Vector2d t(static_cast<double>(i) / n, static_cast<double>(j) / n);
            acc += ws.gsfe_density(t, u.eval_frac(t), nullptr);
        }
    }
    return acc / (n * n) + ws.elastic_energy(u);
}

VectorXd energy_gradient(const DisplacementField& u, const GsfeModel& gsfe,
                         const ElasticityTensor& elast, const BilayerGeometry& geom, int grid_n)
{
    EnergyWorkspace ws(gsfe, elast, geom, grid_n, u.gmax);
    const int n = ws.grid_n;

    std::vector<size_t> half;
    for (size_t k = 0; k < u.modes.size(); ++k) {
        if (in_half_set(u.modes[k])) half.push_back(k);
    }
    VectorXd grad = VectorXd::Zero(static_cast<long>(4 * half.size()));

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            Vector2d t(static_cast<double>(i) / n, static_cast<double>(j) / n);
            Vector2d force;
            ws.gsfe_density(t, u.eval_frac(t), &force);
            force /= static_cast<double>(n) * n;
            for (size_t h = 0; h < half.size(); ++h) {
                const Vector2i& m = u.modes[half[h]];
                const double ph = 2.0 * M_PI * (m.x() * t.x() + m.y() * t.y());
                const double cc = 2.0 * std::cos(ph), ss = -2.0 * std::sin(ph);
                grad[4 * h + 0] += force.x() * cc;
                grad[4 * h + 1] += force.x() * ss;
                grad[4 * h + 2] += force.y() * cc;
                grad[4 * h + 3] += force.y() * ss;
            }
        }
    }

    for (size_t h = 0; h < half.size(); ++h) {
        const Vector2d kv = u.theta_basis * u.modes[half[h]].cast<double>();
        const auto& c = u.coeffs[half[h]];
        const Vector2d a(c.x().real(), c.y().real());
        const Vector2d b(c.x().imag(), c.y().imag());
        const Vector2d ga = ws.quad_grad(kv, a);
        const Vector2d gb = ws.quad_grad(kv, b);
        grad[4 * h + 0] += ga.x();
        grad[4 * h + 1] += gb.x();
        grad[4 * h + 2] += ga.y();
        grad[4 * h + 3] += gb.y();
    }
    return grad;
}

RelaxResult relax(const GsfeModel& gsfe, const ElasticityTensor& elast,
                  const BilayerGeometry& geom, const RelaxOptions& opts)
{
    if (elast.bulk_K <= 0.0 || elast.shear_G <= 0.0) {
        throw std::invalid_argument("relax: elasticity must be positive definite");
    }
    RelaxResult res;
    res.u = zero_displacement(geom, opts.gmax);

    VectorXd x = pack_field(res.u);
    auto energy_at = [&](const VectorXd& p) {
        unpack_field(p, res.u);
        return total_energy(res.u, gsfe, elast, geom, opts.grid_n);
    };
    auto grad_at = [&](const VectorXd& p) {
        unpack_field(p, res.u);
        return energy_gradient(res.u, gsfe, elast, geom, opts.grid_n);
    };

    double f = energy_at(x);
    VectorXd g = grad_at(x);
    VectorXd dir = -g;
    res.energy_trace.push_back(f);

    double step = 1.0;
    for (int it = 0; it < opts.max_iter; ++it) {
        res.grad_norm = g.norm();
        res.iterations = it;
        if (res.grad_norm < opts.grad_tol) {
            res.converged = true;
            break;
        }
        double slope = g.dot(dir);
        if (slope >= 0.0) {  // bad direction, restart with steepest descent
            dir = -g;
            slope = g.dot(dir);
        }
        // backtracking Armijo line search
        double alpha = step;
        double f_new = f;
        VectorXd x_new;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + alpha * dir;
            f_new = energy_at(x_new);
            if (f_new <= f + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;
        step = std::min(alpha * 2.0, 1e3);

        VectorXd g_new = grad_at(x_new);
        // Polak-Ribiere+ update
        double beta = g_new.dot(g_new - g) / std::max(g.dot(g), 1e-300);
        beta = std::max(0.0, beta);
        dir = -g_new + beta * dir;
        x = x_new;
        f = f_new;
        g = g_new;
        res.energy_trace.push_back(f);
    }

    unpack_field(x, res.u);
    res.grad_norm = g.norm();
    return res;
}

void save_displacement(const DisplacementField& u, const std::string& path)
{
    json j;
    j["G_basis"] = {{u.theta_basis(0, 0), u.theta_basis(0, 1)},
                    {u.theta_basis(1, 0), u.theta_basis(1, 1)}};
    json coeffs = json::array();
    for (size_t k = 0; k < u.modes.size(); ++k) {
        coeffs.push_back({u.modes[k].x(), u.modes[k].y(), u.coeffs[k].x().real(),
                          u.coeffs[k].x().imag(), u.coeffs[k].y().real(),
                          u.coeffs[k].y().imag()});
    }
    j["coeffs"] = coeffs;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write displacement file: " + path);
    out << j.dump(2) << "\n";
}

DisplacementField load_displacement(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open displacement file: " + path);
    json j = json::parse(in);

    DisplacementField u;
    const auto& gb = j.at("G_basis");
    u.theta_basis << gb[0][0].get<double>(), gb[0][1].get<double>(), gb[1][0].get<double>(),
        gb[1][1].get<double>();
    for (const auto& row : j.at("coeffs")) {
        Vector2i n(row[0].get<int>(), row[1].get<int>());
        u.modes.push_back(n);
        u.coeffs.push_back(Vector2cd(cplx(row[2].get<double>(), row[3].get<double>()),
                                     cplx(row[4].get<double>(), row[5].get<double>())));
        u.gmax = std::max({u.gmax, std::abs(n.x()), std::abs(n.y())});
    }
    return u;
}

}  // namespace moire
