#include "moire/run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "moire/hamiltonian.hpp"
#include "moire/util.hpp"

namespace moire {

using json = nlohmann::json;

std::string to_hex(std::uint64_t h)
{
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

static void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where)
{
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw std::runtime_error("config: unknown key '" + it.key() + "' in " + where);
        }
    }
}

static void require_positive(double v, const std::string& field)
{
    if (!(v > 0.0)) throw std::runtime_error("config: '" + field + "' must be positive");
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw std::runtime_error("config: parse error in '" + path + "': " + e.what());
    }
    check_keys(j,
               {"geometry", "model", "relaxation", "truncation", "observables", "validate",
                "output_dir", "seed"},
               path);

    RunConfig c;
    if (j.contains("geometry")) {
        const json& g = j["geometry"];
        check_keys(g, {"a", "theta_deg", "rotation"}, "geometry");
        c.a = g.value("a", c.a);
        c.theta_deg = g.value("theta_deg", c.theta_deg);
        std::string rot = g.value("rotation", std::string("symmetric"));
        if (rot == "symmetric") {
            c.convention = RotationConvention::Symmetric;
        } else if (rot == "one_sided") {
            c.convention = RotationConvention::OneSided;
        } else {
            throw std::runtime_error("config: geometry.rotation must be 'symmetric' or 'one_sided'");
        }
        require_positive(c.a, "geometry.a");
        require_positive(c.theta_deg, "geometry.theta_deg");
    }
    if (j.contains("model")) {
        c.model_path = j["model"].get<std::string>();
    }
    if (j.contains("relaxation")) {
        const json& r = j["relaxation"];
        check_keys(r,
                   {"enabled", "gsfe_c0", "gsfe_c1", "bulk_K", "shear_G", "gmax", "grad_tol",
                    "max_iter", "grid", "displacement_file"},
                   "relaxation");
        c.relax_enabled = r.value("enabled", true);
        c.gsfe_c0 = r.value("gsfe_c0", c.gsfe_c0);
        c.gsfe_c1 = r.value("gsfe_c1", c.gsfe_c1);
        c.bulk_K = r.value("bulk_K", c.bulk_K);
        c.shear_G = r.value("shear_G", c.shear_G);
        c.relax_gmax = r.value("gmax", c.relax_gmax);
        c.relax_tol = r.value("grad_tol", c.relax_tol);
        c.relax_max_iter = r.value("max_iter", c.relax_max_iter);
        c.relax_grid = r.value("grid", c.relax_grid);
        c.displacement_path = r.value("displacement_file", std::string());
        if (c.relax_enabled) {
            require_positive(c.bulk_K, "relaxation.bulk_K");
            require_positive(c.shear_G, "relaxation.shear_G");
            if (c.relax_gmax < 1) throw std::runtime_error("config: relaxation.gmax must be >= 1");
        }
    }
    if (j.contains("truncation")) {
        const json& t = j["truncation"];
        check_keys(t, {"lambda", "tau", "mesh_spacing", "mesh_extent", "gcut", "grid_n"},
                   "truncation");
        c.lambda = t.value("lambda", 0.0);
        c.tau = t.value("tau", 0.0);
        c.mesh.spacing = t.value("mesh_spacing", 0.0);
        c.mesh.extent = t.value("mesh_extent", 0.0);
        c.gcut = t.value("gcut", 0);
        c.grid_n = t.value("grid_n", 0);
        if (c.lambda < 0 || c.tau < 0 || c.mesh.spacing < 0 || c.mesh.extent < 0 || c.gcut < 0 ||
            c.grid_n < 0) {
            throw std::runtime_error("config: truncation values must be nonnegative");
        }
    }
    if (j.contains("observables")) {
        const json& o = j["observables"];
        check_keys(o,
                   {"points_per_segment", "dos_emin", "dos_emax", "dos_energies", "epsilon", "nq",
                    "valleys", "lambda_sweep", "tau_sweep"},
                   "observables");
        c.points_per_segment = o.value("points_per_segment", c.points_per_segment);
        c.dos_emin = o.value("dos_emin", 0.0);
        c.dos_emax = o.value("dos_emax", 0.0);
        c.dos_energies = o.value("dos_energies", c.dos_energies);
        c.epsilon = o.value("epsilon", c.epsilon);
        c.nq = o.value("nq", c.nq);
        c.valleys = o.value("valleys", c.valleys);
        if (o.contains("lambda_sweep")) c.lambda_sweep = o["lambda_sweep"].get<std::vector<double>>();
        if (o.contains("tau_sweep")) c.tau_sweep = o["tau_sweep"].get<std::vector<double>>();
        require_positive(c.epsilon, "observables.epsilon");
        if (c.nq < 1) throw std::runtime_error("config: observables.nq must be >= 1");
        if (c.valleys != 1 && c.valleys != 2) {
            throw std::runtime_error("config: observables.valleys must be 1 or 2");
        }
    }
    if (j.contains("validate")) {
        const json& v = j["validate"];
        check_keys(v, {"m", "n", "k_points", "window"}, "validate");
        c.comm_m = v.value("m", c.comm_m);
        c.comm_n = v.value("n", c.comm_n);
        c.validate_k = v.value("k_points", c.validate_k);
        c.window = v.value("window", c.window);
        require_positive(c.window, "validate.window");
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.seed = j.value("seed", c.seed);

    // homotopy-safety of an explicit lambda, against this config's geometry
    if (c.lambda > 0.0) {
        const double limit = homotopy_limit(config_geometry(c));
        if (c.lambda >= limit) {
            throw std::runtime_error("config: truncation.lambda exceeds the homotopy-safe limit " +
                                     std::to_string(limit));
        }
    }
    return c;
}

static json effective_json(const RunConfig& c)
{
    json j;
    j["geometry"] = {{"a", c.a},
                     {"theta_deg", c.theta_deg},
                     {"rotation", c.convention == RotationConvention::Symmetric ? "symmetric"
                                                                                : "one_sided"}};
    j["model"] = c.model_path;
    j["relaxation"] = {{"enabled", c.relax_enabled}, {"gsfe_c0", c.gsfe_c0},
                       {"gsfe_c1", c.gsfe_c1},       {"bulk_K", c.bulk_K},
                       {"shear_G", c.shear_G},       {"gmax", c.relax_gmax},
                       {"grad_tol", c.relax_tol},    {"max_iter", c.relax_max_iter},
                       {"grid", c.relax_grid},       {"displacement_file", c.displacement_path}};
    j["truncation"] = {{"lambda", c.lambda},           {"tau", c.tau},
                       {"mesh_spacing", c.mesh.spacing}, {"mesh_extent", c.mesh.extent},
                       {"gcut", c.gcut},               {"grid_n", c.grid_n}};
    j["observables"] = {{"points_per_segment", c.points_per_segment},
                        {"dos_emin", c.dos_emin},
                        {"dos_emax", c.dos_emax},
                        {"dos_energies", c.dos_energies},
                        {"epsilon", c.epsilon},
                        {"nq", c.nq},
                        {"valleys", c.valleys},
                        {"lambda_sweep", c.lambda_sweep},
                        {"tau_sweep", c.tau_sweep}};
    j["validate"] = {{"m", c.comm_m},
                     {"n", c.comm_n},
                     {"k_points", c.validate_k},
                     {"window", c.window}};
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    return j;
}

std::string config_dump(const RunConfig& config) { return effective_json(config).dump(2) + "\n"; }

std::string config_hash(const RunConfig& config)
{
    return to_hex(fnv1a(effective_json(config).dump()));
}

BilayerGeometry config_geometry(const RunConfig& config)
{
    return make_twisted_pair(make_graphene(config.a), config.theta_deg * M_PI / 180.0,
                             config.convention);
}

std::string file_hash(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return to_hex(fnv1a(ss.str()));
}

void write_manifest(const std::string& output_dir, const std::string& subcommand,
                    const RunConfig& config,
                    const std::vector<std::pair<std::string, double>>& timings,
                    const std::vector<ManifestEntry>& outputs)
{
    json j;
    j["tool"] = "moirems";
    j["version"] = kVersion;
    j["subcommand"] = subcommand;
    j["config_hash"] = config_hash(config);
    json t = json::object();
    for (const auto& [name, seconds] : timings) t[name] = seconds;
    j["timings_s"] = t;
    json o = json::object();
    for (const auto& e : outputs) o[e.name] = e.hash;
    j["outputs"] = o;
    const std::string path = output_dir + "/manifest.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace moire
