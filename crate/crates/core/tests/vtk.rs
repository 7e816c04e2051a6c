use nematic_well::energy::{AnchoringConfig, WellProblem};
use nematic_well::io::vtk::{sample, write_vtk, Lattice};
use nematic_well::io::ArtifactMeta;
use nematic_well::minimize::{make_initial, InitialCondition};
use nematic_well::spectral::{BasisKind, GridSpec};
use nematic_well::tensor::MaterialParams;
use vtkio::model::{Attribute, DataSet, Piece};

fn problem() -> WellProblem {
    WellProblem::new(5.0, 0.5, MaterialParams::default(), AnchoringConfig::default(), GridSpec::new(BasisKind::Chebyshev, 4, 4, 3)).unwrap()
}

#[test]
fn uniform_uniaxial_field_has_no_biaxiality() {
    let prob = problem();
    let s = prob.s_plus();
    let f = make_initial(&InitialCondition::diagonal(), &prob).unwrap();
    let d = sample(&f, &prob, Lattice { nx: 5, ny: 4, nz: 3 }).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d.lattice.points() {
        assert!(d.beta2[i].abs() < 1e-10, "{}", d.beta2[i]);
        let n = d.director[i];
        assert!((n[0] - h).abs() < 1e-10 && (n[1] - h).abs() < 1e-10 && n[2].abs() < 1e-10, "{n:?}");
        assert!((d.q3[i] + s / 6.0).abs() < 1e-10);
        let [xx, yy, zz, xy, yz, xz] = d.q[i];
        assert!((xx - s / 6.0).abs() < 1e-10 && (yy - s / 6.0).abs() < 1e-10 && (zz + s / 3.0).abs() < 1e-10);
        assert!((xy - s / 2.0).abs() < 1e-10 && yz.abs() < 1e-10 && xz.abs() < 1e-10);
    }
}

#[test]
fn written_file_reloads_to_the_sampled_values() {
    let prob = problem();
    let f = make_initial(&InitialCondition::rotated(), &prob).unwrap();
    let d = sample(&f, &prob, Lattice { nx: 7, ny: 6, nz: 2 }).unwrap();
    let mut buf = Vec::new();
    write_vtk(&mut buf, &ArtifactMeta::new("cafe"), &d).unwrap();
    let vtk = vtkio::Vtk::parse_legacy_be(buf.as_slice()).unwrap();
    assert!(vtk.title.ends_with("config_hash=cafe"));
    let DataSet::StructuredGrid { pieces, .. } = vtk.data else { panic!("not a structured grid") };
    let Piece::Inline(piece) = pieces.into_iter().next().unwrap() else { panic!("no inline piece") };
    let pts: Vec<f64> = piece.points.cast_into().unwrap();
    assert_eq!(pts, d.points.concat());
    for a in piece.data.point {
        match a {
            Attribute::DataArray(arr) => {
                let v: Vec<f64> = arr.data.cast_into().unwrap();
                let want = match arr.name.as_str() {
                    "beta2" => d.beta2.clone(),
                    "q3" => d.q3.clone(),
                    "director" => d.director.concat(),
                    other => panic!("unexpected array {other}"),
                };
                assert_eq!(v, want, "{}", arr.name);
            }
            Attribute::Field { data_array, .. } => {
                let v: Vec<f64> = data_array[0].data.clone().cast_into().unwrap();
                assert_eq!(v, d.q.concat());
            }
        }
    }
}
