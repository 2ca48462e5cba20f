use lipschitz_approx::io::{read_distance_matrix, read_grid, read_point_cloud, write_distance_matrix, write_grid, write_point_cloud};
use lipschitz_approx::{Check, Error, GridDomain, GridField, MetricSpace, Norm, NormContext, PointTag, Report, DEFAULT_TOL};

#[test]
fn point_cloud_round_trip() {
    let text = "id,x1,x2,value,tag\na,0,0,1.5,boundary\nb,1,0.25,,interior\nc,0.5,2,-3,none\n";
    let cloud = read_point_cloud::<f64>(text.as_bytes()).unwrap();
    assert_eq!(cloud.dim, 2);
    assert_eq!(cloud.values, vec![Some(1.5), None, Some(-3.0)]);
    assert_eq!(cloud.tagged(PointTag::Boundary), vec![0]);
    assert!(cloud.required_values(&[1]).is_err());
    let mut buf = Vec::new();
    write_point_cloud(&mut buf, &cloud).unwrap();
    assert_eq!(read_point_cloud::<f64>(buf.as_slice()).unwrap(), cloud);
}

#[test]
fn point_cloud_errors_name_the_line() {
    let bad_number = "id,x1,value,tag\na,0,1,none\nb,zz,1,none\n";
    assert!(matches!(read_point_cloud::<f64>(bad_number.as_bytes()), Err(Error::Parse { line: 3, .. })));
    let bad_tag = "id,x1,value,tag\na,0,1,edge\n";
    assert!(matches!(read_point_cloud::<f64>(bad_tag.as_bytes()), Err(Error::Parse { line: 2, .. })));
    let bad_header = "id,y,value,tag\na,0,1,none\n";
    assert!(matches!(read_point_cloud::<f64>(bad_header.as_bytes()), Err(Error::Parse { line: 1, .. })));
    let infinite = "id,x1,value,tag\na,inf,1,none\n";
    assert!(matches!(read_point_cloud::<f64>(infinite.as_bytes()), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn distance_matrix_round_trip() {
    let space = MetricSpace::<f64>::from_coords(2, vec![0.0, 0.0, 3.0, 4.0, 1.0, 1.0], Norm::L2).unwrap();
    let ids = vec!["p".to_string(), "q".to_string(), "r".to_string()];
    let mut buf = Vec::new();
    write_distance_matrix(&mut buf, &ids, &space).unwrap();
    let (read_ids, read) = read_distance_matrix::<f64>(buf.as_slice(), DEFAULT_TOL).unwrap();
    assert_eq!(read_ids, ids);
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(read.dist(i, j), space.dist(i, j));
        }
    }
}

#[test]
fn asymmetric_matrix_is_rejected() {
    let text = ",a,b\na,0,1\nb,2,0\n";
    assert!(read_distance_matrix::<f64>(text.as_bytes(), DEFAULT_TOL).is_err());
}

#[test]
fn grid_round_trip_keeps_kinds_and_missing_values() {
    let g = GridDomain::<f64>::from_predicate(2, [0.0, 0.0], [1.0, 1.0], [9, 9], NormContext::new(Norm::L1), |p: [f64; 2]| {
        p[0] + p[1] <= 1.2
    })
    .unwrap();
    let u: Vec<Option<f64>> = (0..g.len()).map(|k| g.kind(k).is_inside().then(|| g.point(k)[0] * 0.1)).collect();
    let v: Vec<f64> = (0..g.len()).map(|k| k as f64 / 7.0).collect();
    let fields = [GridField::partial("u", u.clone()), GridField::full("v", &v)];
    let mut buf = Vec::new();
    write_grid(&mut buf, &g, &fields).unwrap();
    let (read, read_fields) = read_grid::<f64>(buf.as_slice()).unwrap();
    assert_eq!(read.kinds(), g.kinds());
    assert_eq!(read.shape(), g.shape());
    assert_eq!(read.norm(), g.norm());
    for k in 0..g.len() {
        assert_eq!(read.point(k), g.point(k));
    }
    assert_eq!(read_fields[0].values, u);
    assert_eq!(read_fields[1].dense().unwrap(), v);
    assert!(read_fields[0].dense().is_err());
}

#[test]
fn grid_errors_name_the_line() {
    let text = "dim 1\nnorm 2\nlo 0\nh 0.5\nshape 3\nfields u\nnodes\nb 0\ni x\nb 1\n";
    assert!(matches!(read_grid::<f64>(text.as_bytes()), Err(Error::Parse { line: 9, .. })));
    let short = "dim 1\nnorm 2\nlo 0\nh 0.5\nshape 3\nfields u\nnodes\nb 0\ni 1\n";
    assert!(matches!(read_grid::<f64>(short.as_bytes()), Err(Error::Parse { line: 10, .. })));
    let kind = "dim 1\nnorm 2\nlo 0\nh 0.5\nshape 2\nfields\nnodes\nb\nq\n";
    assert!(matches!(read_grid::<f64>(kind.as_bytes()), Err(Error::Parse { line: 9, .. })));
}

#[test]
fn report_round_trip() {
    let mut r = Report::new();
    r.set("command", "envelope");
    r.set("sup_distance", 0.125);
    r.push_check(Check::new("lip(out) <= K", 0.99, 1.0));
    r.push_check(Check::new("sup <= eps", 0.2, 0.1));
    let back = Report::read_from(r.to_text().as_bytes()).unwrap();
    assert_eq!(back.get("command"), Some("envelope"));
    assert_eq!(back.parse::<f64>("sup_distance").unwrap(), 0.125);
    assert_eq!(back.checks().len(), 2);
    assert_eq!(back.first_failure().unwrap().name, "sup <= eps");
    assert!(Report::read_from("no separator\n".as_bytes()).is_err());
}
