use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shellid_core::assembly::ElementRequest;
use shellid_core::experiments::{synthesize, uniaxial, CaseSpec, InitialGuess};
use shellid_core::inverse::Identification;
use shellid_core::material::{MaterialField, NodalMaterial};

fn case(n: usize) -> CaseSpec {
    let mut c = uniaxial().with_levels(1);
    c.analysis_mesh = [n, n];
    c.fine_mesh = [2 * n, 2 * n];
    c.material_mesh = [4, 4];
    c.experiment_grid = [2 * n + 1, 2 * n + 1];
    c.initial = InitialGuess::Constant { values: [1.0, 1e-3] };
    c
}

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    for n in [8, 16, 32] {
        let spec = case(n);
        let problem = spec.problem(spec.analysis_mesh).unwrap();
        let grid = spec.material_grid().unwrap();
        let field = MaterialField::constant(grid.clone(), [1.0, 1e-3]);
        let material = NodalMaterial::new(problem.patch(), field).unwrap();
        let u = vec![0.0; problem.dofs().n_dofs()];
        let x = problem.system.positions(&u);
        let load = problem.load.at(1.0);
        for (label, req) in [
            ("tangent", ElementRequest { tangent: true, sensitivity: false }),
            ("tangent+sensitivity", ElementRequest { tangent: true, sensitivity: true }),
        ] {
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, _| {
                b.iter(|| {
                    problem
                        .system
                        .assemble(&problem.law, &material, &x, &load, req, grid.num_nodes())
                        .unwrap()
                })
            });
        }
    }
    group.finish();
}

fn factorization(c: &mut Criterion) {
    let mut group = c.benchmark_group("factorization");
    group.sample_size(20);
    for n in [16, 32, 64] {
        let spec = case(n);
        let problem = spec.problem(spec.analysis_mesh).unwrap();
        let grid = spec.material_grid().unwrap();
        let material = NodalMaterial::new(problem.patch(), MaterialField::constant(grid.clone(), [1.0, 1e-3])).unwrap();
        let u = vec![0.0; problem.dofs().n_dofs()];
        let x = problem.system.positions(&u);
        let req = ElementRequest { tangent: true, sensitivity: false };
        let terms = problem
            .system
            .assemble(&problem.law, &material, &x, &problem.load.at(1.0), req, grid.num_nodes())
            .unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| problem.system.factorize(&terms.k_ff).unwrap())
        });
    }
    group.finish();
}

fn jacobian(c: &mut Criterion) {
    let mut group = c.benchmark_group("jacobian");
    group.sample_size(10);
    let spec = case(8);
    let data = synthesize(&spec, 0).unwrap();
    let problem = spec.problem(spec.analysis_mesh).unwrap();
    let grid = spec.material_grid().unwrap();
    let design = spec.design_map(&grid);
    let x0 = spec.initial_design(&design, &grid, 0).unwrap();
    let mut id = Identification::new(&problem, &grid, design, &data.measurements, spec.inverse_settings()).unwrap();
    group.bench_function("analytic", |b| b.iter(|| id.analytic_jacobian(&x0).unwrap()));
    group.bench_function("finite_difference", |b| b.iter(|| id.fd_jacobian(&x0).unwrap()));
    group.finish();
}

criterion_group!(benches, assembly, factorization, jacobian);
criterion_main!(benches);
