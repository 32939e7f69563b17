#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "moire/hamiltonian.hpp"
#include "moire/observables.hpp"
#include "moire/relaxation.hpp"
#include "moire/supercell.hpp"

namespace py = pybind11;
using namespace moire;

namespace {

Lattice2D graphene(double a) { return make_graphene(a); }

BilayerGeometry twisted_graphene(double theta_deg, double a, const std::string& rotation)
{
    RotationConvention conv;
    if (rotation == "symmetric") {
        conv = RotationConvention::Symmetric;
    } else if (rotation == "one_sided") {
        conv = RotationConvention::OneSided;
    } else {
        throw std::invalid_argument("rotation must be 'symmetric' or 'one_sided'");
    }
    return make_twisted_pair(make_graphene(a), theta_deg * M_PI / 180.0, conv);
}

Engine make_engine(const BilayerGeometry& geom, const HoppingModel& model,
                   const DisplacementField* u, double lambda, double tau, double inter_scale,
                   int valley_sign, int threads)
{
    EngineOptions opts;
    opts.lambda = lambda;
    opts.tau = tau;
    opts.inter_scale = inter_scale;
    opts.valley_sign = valley_sign;
    opts.threads = threads;
    return build_engine(geom, model, (u && !u->empty()) ? u : nullptr, opts);
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "momentum-space band structures of twisted incommensurate bilayers";

    py::class_<Lattice2D>(m, "Lattice2D")
        .def_readonly("basis", &Lattice2D::basis)
        .def_property_readonly("num_orbitals", &Lattice2D::num_orbitals)
        .def("cell_area", &Lattice2D::cell_area);

    py::class_<BilayerGeometry>(m, "BilayerGeometry")
        .def_readonly("layer1", &BilayerGeometry::layer1)
        .def_readonly("layer2", &BilayerGeometry::layer2)
        .def_readonly("twist_angle", &BilayerGeometry::twist_angle)
        .def_readonly("theta_matrix", &BilayerGeometry::theta_matrix)
        .def_readonly("moire_cell", &BilayerGeometry::moire_cell)
        .def("moire_g_length", &BilayerGeometry::moire_g_length)
        .def("moire_cell_area", &BilayerGeometry::moire_cell_area);

    py::class_<CommensurateCell>(m, "CommensurateCell")
        .def_readonly("geom", &CommensurateCell::geom)
        .def_readonly("atom_count", &CommensurateCell::atom_count)
        .def_readonly("m", &CommensurateCell::m)
        .def_readonly("n", &CommensurateCell::n);

    m.def("graphene", &graphene, py::arg("a") = 2.46);
    m.def("twisted_graphene", &twisted_graphene, py::arg("theta_deg"), py::arg("a") = 2.46,
          py::arg("rotation") = "symmetric");
    m.def("commensurate_cell",
          [](int mm, int nn, double a) { return commensurate_supercell(mm, nn, make_graphene(a)); },
          py::arg("m"), py::arg("n"), py::arg("a") = 2.46);
    m.def("dirac_momentum", [](const Lattice2D& lat) { return dirac_momentum(lat); });
    m.def("homotopy_limit", &homotopy_limit);
    m.def("default_lambda", &default_lambda);
    m.def("default_tau", &default_tau);

    py::class_<InterlayerModel>(m, "InterlayerModel")
        .def_readwrite("t_perp", &InterlayerModel::t_perp)
        .def_readwrite("lambda_", &InterlayerModel::lambda)
        .def_readwrite("d", &InterlayerModel::d)
        .def_readwrite("cutoff", &InterlayerModel::cutoff)
        .def_readwrite("cutoff_width", &InterlayerModel::cutoff_width);

    py::class_<HoppingModel>(m, "HoppingModel")
        .def_readwrite("intralayer_shells", &HoppingModel::intralayer_shells)
        .def_readwrite("onsite", &HoppingModel::onsite)
        .def_readwrite("intralayer_decay", &HoppingModel::intralayer_decay)
        .def_readwrite("interlayer", &HoppingModel::interlayer);
    m.def("nn_only_preset", &nn_only_preset);
    m.def("load_hopping_model", &load_hopping_model);
    m.def("save_hopping_model", &save_hopping_model);

    py::class_<DisplacementField>(m, "DisplacementField")
        .def_property_readonly("empty", &DisplacementField::empty)
        .def_readonly("gmax", &DisplacementField::gmax)
        .def("eval_frac", &DisplacementField::eval_frac)
        .def("max_norm", &DisplacementField::max_norm, py::arg("samples") = 48)
        .def("coeff_l2", &DisplacementField::coeff_l2);

    py::class_<RelaxResult>(m, "RelaxResult")
        .def_readonly("u", &RelaxResult::u)
        .def_readonly("converged", &RelaxResult::converged)
        .def_readonly("iterations", &RelaxResult::iterations)
        .def_readonly("grad_norm", &RelaxResult::grad_norm)
        .def_readonly("energy_trace", &RelaxResult::energy_trace);

    m.def(
        "relax",
        [](const BilayerGeometry& geom, double gsfe_c0, double gsfe_c1, double bulk_K,
           double shear_G, int gmax, double grad_tol, int max_iter) {
            RelaxOptions opts;
            opts.gmax = gmax;
            opts.grad_tol = grad_tol;
            opts.max_iter = max_iter;
            return relax(GsfeModel::first_star(gsfe_c0, gsfe_c1), ElasticityTensor{bulk_K, shear_G},
                         geom, opts);
        },
        py::arg("geom"), py::arg("gsfe_c0") = 0.0, py::arg("gsfe_c1") = 3.3e-4,
        py::arg("bulk_K") = 12.82, py::arg("shear_G") = 9.57, py::arg("gmax") = 5,
        py::arg("grad_tol") = 1e-8, py::arg("max_iter") = 2000);
    m.def("load_displacement", &load_displacement);
    m.def("save_displacement", &save_displacement);

    py::class_<Engine>(m, "Engine")
        .def_property_readonly("dim", [](const Engine& e) { return e.basis.size(); })
        .def_property_readonly("valley", [](const Engine& e) { return e.valley(); })
        .def_property_readonly("lambda_", [](const Engine& e) { return e.basis.lambda; })
        .def_property_readonly("tau", [](const Engine& e) { return e.coupling.tau; })
        .def("hamiltonian", [](const Engine& e, const Vector2d& q) {
            return hamiltonian_at(e, q).matrix;
        })
        .def("eigenvalues", [](const Engine& e, const Vector2d& q) {
            return eigenvalues_at(e, q);
        })
        .def("basis_elements", [](const Engine& e) {
            std::vector<std::tuple<int, int, int, int, double, double>> out;
            for (const auto& b : e.basis.elements) {
                out.emplace_back(b.layer, b.n.x(), b.n.y(), b.orbital, b.G.x(), b.G.y());
            }
            return out;
        })
        .def("coupling_samples", [](const Engine& e) {
            std::vector<std::tuple<int, int, int, int, double, double, std::complex<double>, double>>
                out;
            for (const auto& s : e.coupling.samples) {
                out.emplace_back(s.n.x(), s.n.y(), s.m.x(), s.m.y(), s.xi.x(), s.xi.y(),
                                 s.values(0, 0), s.chi);
            }
            return out;
        });
    m.def("build_engine", &make_engine, py::arg("geom"), py::arg("model"),
          py::arg("u") = static_cast<const DisplacementField*>(nullptr), py::arg("lambda_") = 0.0,
          py::arg("tau") = 0.0, py::arg("inter_scale") = 1.0, py::arg("valley_sign") = 1,
          py::arg("threads") = 1, py::keep_alive<0, 1>());

    py::class_<KPath>(m, "KPath")
        .def_readonly("names", &KPath::names)
        .def_readonly("vertices", &KPath::vertices)
        .def_readwrite("points_per_segment", &KPath::points_per_segment)
        .def("points", &KPath::points)
        .def("distances", &KPath::distances);
    m.def("default_path", &default_path, py::arg("geom"), py::arg("valley_sign") = 1,
          py::arg("points_per_segment") = 24);

    py::class_<BandStructure>(m, "BandStructure")
        .def_readonly("s", &BandStructure::s)
        .def_readonly("energies", &BandStructure::energies);
    m.def("bands", &bands);
    m.def("save_bands", &save_bands);

    py::class_<DosCurve>(m, "DosCurve")
        .def_readonly("energies", &DosCurve::energies)
        .def_readonly("dos", &DosCurve::dos)
        .def_readonly("epsilon", &DosCurve::epsilon)
        .def_readonly("nq", &DosCurve::nq)
        .def_readonly("valleys", &DosCurve::valleys)
        .def_readonly("noise_estimate", &DosCurve::noise_estimate)
        .def_readonly("warning", &DosCurve::warning);
    m.def(
        "dos",
        [](const std::vector<const Engine*>& engines, double emin, double emax, int n_energies,
           double epsilon, int nq, int reported_valleys) {
            DosOptions opts;
            opts.emin = emin;
            opts.emax = emax;
            opts.n_energies = n_energies;
            opts.epsilon = epsilon;
            opts.nq = nq;
            return dos(engines, opts, reported_valleys);
        },
        py::arg("engines"), py::arg("emin") = 0.0, py::arg("emax") = 0.0,
        py::arg("n_energies") = 801, py::arg("epsilon") = 0.002, py::arg("nq") = 8,
        py::arg("reported_valleys") = 0);

    py::class_<SupercellHamiltonian>(m, "SupercellHamiltonian")
        .def_property_readonly("dim", &SupercellHamiltonian::dim);
    m.def(
        "build_supercell",
        [](const CommensurateCell& cell, const HoppingModel& model, const DisplacementField* u) {
            return build_supercell(cell, model, (u && !u->empty()) ? u : nullptr);
        },
        py::arg("cell"), py::arg("model"),
        py::arg("u") = static_cast<const DisplacementField*>(nullptr));
    m.def("supercell_eigenvalues", &supercell_eigenvalues);
    m.def("supercell_bloch", [](const SupercellHamiltonian& sc, const Vector2d& k) {
        return supercell_bloch(sc, k);
    });
}
