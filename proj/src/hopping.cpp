#include "moire/hopping.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace moire {

using json = nlohmann::json;
using cplx = std::complex<double>;

IntralayerModel build_shell_model(const Lattice2D& lat,
                                  const std::vector<double>& shell_amplitudes,
                                  const std::vector<double>& onsite)
{
    const int norb = lat.num_orbitals();
    if (static_cast<int>(onsite.size()) != norb) {
        throw std::invalid_argument("build_shell_model: onsite size must match orbital count");
    }
    IntralayerModel model;
    model.num_orbitals = norb;
    model.num_shells = static_cast<int>(shell_amplitudes.size());
    model.onsite = onsite;
    if (model.num_shells == 0) return model;

    // Collect distinct interatomic distances from a cell block large enough
    // for a handful of shells.
    const int reach = 3 + model.num_shells / 2;
    std::vector<double> dists;
    for (int i = -reach; i <= reach; ++i) {
        for (int j = -reach; j <= reach; ++j) {
            Vector2d cell_vec = lat.basis * Vector2d(i, j);
            for (int a = 0; a < norb; ++a) {
                for (int b = 0; b < norb; ++b) {
                    double r = (cell_vec + lat.orbitals[b].position - lat.orbitals[a].position).norm();
                    if (r > 1e-9) dists.push_back(r);
                }
            }
        }
    }
    std::sort(dists.begin(), dists.end());
    std::vector<double> shell_r;
    for (double r : dists) {
        if (shell_r.empty() || r > shell_r.back() + 1e-6) shell_r.push_back(r);
        if (static_cast<int>(shell_r.size()) == model.num_shells) break;
    }
    if (static_cast<int>(shell_r.size()) < model.num_shells) {
        throw std::runtime_error("build_shell_model: enumeration reach too small");
    }

    const double rmax = shell_r.back() + 1e-6;
    for (int i = -reach; i <= reach; ++i) {
        for (int j = -reach; j <= reach; ++j) {
            Vector2d cell_vec = lat.basis * Vector2d(i, j);
            for (int a = 0; a < norb; ++a) {
                for (int b = 0; b < norb; ++b) {
                    double r = (cell_vec + lat.orbitals[b].position - lat.orbitals[a].position).norm();
                    if (r < 1e-9 || r > rmax) continue;
                    for (int s = 0; s < model.num_shells; ++s) {
                        if (std::abs(r - shell_r[s]) < 1e-6) {
                            model.terms.push_back(
                                {Vector2i(i, j), a, b, shell_amplitudes[s], s + 1, shell_r[s]});
                            break;
                        }
                    }
                }
            }
        }
    }
    return model;
}

MatrixXcd monolayer_bloch(const IntralayerModel& model, const Lattice2D& lat,
                          const Vector2d& q)
{
    const int n = model.num_orbitals;
    MatrixXcd m = MatrixXcd::Zero(n, n);
    for (int a = 0; a < n; ++a) m(a, a) = model.onsite[a];
    for (const auto& t : model.terms) {
        Vector2d r = lat.basis * t.cell.cast<double>();
        m(t.orb_from, t.orb_to) += t.amplitude * std::exp(cplx(0.0, q.dot(r)));
    }
    return m;
}

static double quintic_ramp(double t)
{
    // 1 at t=0, 0 at t=1, C^2 at both ends.
    if (t <= 0.0) return 1.0;
    if (t >= 1.0) return 0.0;
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

double interlayer_value(const InterlayerModel& model, const Vector2d& x, int a1, int a2)
{
    if (a1 < 0 || a1 >= model.num_orbitals_1 || a2 < 0 || a2 >= model.num_orbitals_2) {
        throw std::out_of_range("interlayer_value: unknown orbital pair");
    }
    const double r = x.norm();
    if (r >= model.cutoff) return 0.0;
    const double rho = std::sqrt(r * r + model.d * model.d);
    double v = model.t_perp * std::exp(-(rho - model.d) / model.lambda);
    const double ramp_start = model.cutoff - model.cutoff_width;
    if (r > ramp_start) v *= quintic_ramp((r - ramp_start) / model.cutoff_width);
    return v * model.scale(a1, a2);
}

HoppingModel nn_only_preset()
{
    HoppingModel m;
    m.intralayer_shells = {-2.7};
    m.onsite = {0.0, 0.0};
    m.interlayer.t_perp = 0.42;
    m.interlayer.lambda = 0.27;
    m.interlayer.d = 3.35;
    m.interlayer.cutoff = 8.0;
    m.interlayer.cutoff_width = 0.5;
    return m;
}

static void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where)
{
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw std::runtime_error("unknown key '" + it.key() + "' in " + where);
        }
    }
}

HoppingModel load_hopping_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    json j = json::parse(in);
    check_keys(j, {"intralayer", "interlayer"}, path);

    HoppingModel m;
    const json& intra = j.at("intralayer");
    check_keys(intra, {"shells", "onsite", "decay_lambda"}, "intralayer");
    m.intralayer_shells = intra.at("shells").get<std::vector<double>>();
    m.onsite = intra.at("onsite").get<std::vector<double>>();
    m.intralayer_decay = intra.value("decay_lambda", 0.30);
    if (m.intralayer_decay <= 0.0) {
        throw std::runtime_error("intralayer decay_lambda must be positive");
    }

    const json& inter = j.at("interlayer");
    check_keys(inter, {"t_perp", "lambda", "d", "cutoff", "cutoff_width", "pair_scale"},
               "interlayer");
    m.interlayer.t_perp = inter.at("t_perp").get<double>();
    m.interlayer.lambda = inter.at("lambda").get<double>();
    m.interlayer.d = inter.at("d").get<double>();
    m.interlayer.cutoff = inter.value("cutoff", 8.0);
    m.interlayer.cutoff_width = inter.value("cutoff_width", 0.5);
    if (inter.contains("pair_scale")) {
        m.interlayer.pair_scale = inter.at("pair_scale").get<std::vector<double>>();
    }
    if (m.interlayer.lambda <= 0.0 || m.interlayer.d <= 0.0 || m.interlayer.cutoff <= 0.0 ||
        m.interlayer.cutoff_width <= 0.0) {
        throw std::runtime_error("interlayer model constants must be positive");
    }
    return m;
}

void save_hopping_model(const HoppingModel& m, const std::string& path)
{
    json j;
    j["intralayer"]["shells"] = m.intralayer_shells;
    j["intralayer"]["onsite"] = m.onsite;
    j["intralayer"]["decay_lambda"] = m.intralayer_decay;
    j["interlayer"]["t_perp"] = m.interlayer.t_perp;
    j["interlayer"]["lambda"] = m.interlayer.lambda;
    j["interlayer"]["d"] = m.interlayer.d;
    j["interlayer"]["cutoff"] = m.interlayer.cutoff;
    j["interlayer"]["cutoff_width"] = m.interlayer.cutoff_width;
    if (!m.interlayer.pair_scale.empty()) j["interlayer"]["pair_scale"] = m.interlayer.pair_scale;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace moire
