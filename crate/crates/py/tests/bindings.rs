use pyo3::prelude::*;
use pyo3::types::PyDict;

#[test]
fn module_functions_match_core() {
    Python::initialize();
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(ionlink_py::ionlink_py)(py);
        let m = m.bind(py);
        let f: f64 = m.call_method1("solid_angle_fraction", (0.8,)).unwrap().extract().unwrap();
        assert_eq!(f, ionlink::budget::solid_angle_fraction(0.8).unwrap());

        let e: f64 = m.call_method1("gate_infidelity", (285.0, 200.0)).unwrap().extract().unwrap();
        assert!((e - 0.0285).abs() < 1e-15);

        let err = m.call_method1("beta_from_ratio", (-1.0,)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));

        let d = m.call_method1("rod_clipping", (0.8, 10_000usize, 3u64)).unwrap();
        let d = d.cast::<PyDict>().unwrap();
        let frac: f64 = d.get_item("blocked_fraction").unwrap().unwrap().extract().unwrap();
        let core = ionlink::raytrace::rod_clipping(&ionlink::trap::TrapGeometry::default(), 0.8, 10_000, 3).unwrap();
        assert_eq!(frac, core.blocked_fraction);
    });
}
