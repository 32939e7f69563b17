#ifndef MOIRE_RUN_CONFIG_HPP
#define MOIRE_RUN_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "moire/geometry.hpp"
#include "moire/momentum_basis.hpp"

namespace moire {

inline constexpr const char* kVersion = "0.1.0";

/// One JSON config drives every subcommand. Unknown keys are rejected.
struct RunConfig {
    // geometry
    double a = 2.46;          // angstrom
    double theta_deg = 3.0;
    RotationConvention convention = RotationConvention::Symmetric;

    // model
    std::string model_path;   // empty = built-in NN-only preset

    // relaxation
    bool relax_enabled = false;
    double gsfe_c0 = 0.0;          // eV/A^2
    double gsfe_c1 = 3.3e-4;       // eV/A^2, first-star coefficient
    double bulk_K = 12.82;         // eV/A^2
    double shear_G = 9.57;         // eV/A^2
    int relax_gmax = 5;
    double relax_tol = 1e-8;
    int relax_max_iter = 2000;
    int relax_grid = 0;
    std::string displacement_path;  // load a solved field instead of minimizing

    // truncation
    double lambda = 0.0;  // 0 = default
    double tau = 0.0;     // 0 = default
    MeshSpec mesh;
    int gcut = 0;
    int grid_n = 0;

    // observables
    int points_per_segment = 24;
    double dos_emin = 0.0, dos_emax = 0.0;
    int dos_energies = 801;
    double epsilon = 0.002;  // eV
    int nq = 8;
    int valleys = 2;
    std::vector<double> lambda_sweep, tau_sweep;

    // validate (commensurate oracle)
    int comm_m = 1, comm_n = 2;
    int validate_k = 4;
    double window = 1.0;  // eV

    // io
    std::string output_dir = ".";
    std::uint64_t seed = 0;
};

/// Strict load: unknown keys anywhere, non-positive physical quantities, or
/// homotopy-unsafe lambda reject with a field-naming message.
RunConfig load_run_config(const std::string& path);

/// Effective config with every default materialized, serialized canonically.
std::string config_dump(const RunConfig& config);

std::string config_hash(const RunConfig& config);

BilayerGeometry config_geometry(const RunConfig& config);

/// Content hash of a file on disk (hex), for manifests and cache keys.
std::string file_hash(const std::string& path);

struct ManifestEntry {
    std::string name;
    std::string hash;
};

/// Writes <output_dir>/manifest.json listing the config hash, code version,
/// subcommand, per-stage timings (seconds) and output content hashes.
void write_manifest(const std::string& output_dir, const std::string& subcommand,
                    const RunConfig& config,
                    const std::vector<std::pair<std::string, double>>& timings,
                    const std::vector<ManifestEntry>& outputs);

}  // namespace moire

#endif
