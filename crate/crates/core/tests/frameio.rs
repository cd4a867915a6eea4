use std::fs;
use std::path::Path;

use verifuse::frameio::{
    decode_png, encode_ppm, load_detections, load_ground_truth, load_sequence, read_frame, write_detections, Detection,
};
use verifuse::{Error, Frame};

fn write_seq(dir: &Path, count: usize, skip: &[usize]) {
    fs::write(
        dir.join("manifest.json"),
        format!(r#"{{"frame_count":{count},"fps":10,"pattern":"f%03d.ppm"}}"#),
    )
    .unwrap();
    for i in (0..count).filter(|i| !skip.contains(i)) {
        let f = Frame::filled(0, 4, 2, &[i as u8 * 10, 7, 200]).unwrap();
        fs::write(dir.join(format!("f{i:03}.ppm")), encode_ppm(&f).unwrap()).unwrap();
    }
}

#[test]
fn loads_sequence_in_index_order() {
    let tmp = tempfile::tempdir().unwrap();
    write_seq(tmp.path(), 3, &[]);
    let frames = load_sequence(tmp.path(), &tmp.path().join("manifest.json")).unwrap();
    assert_eq!(frames.len(), 3);
    for (i, f) in frames.iter().enumerate() {
        assert_eq!(f.index, i);
        assert_eq!(f.pixel(3, 1), &[i as u8 * 10, 7, 200]);
    }
    assert_eq!(
        frames,
        load_sequence(tmp.path(), &tmp.path().join("manifest.json")).unwrap()
    );
}

#[test]
fn reports_lowest_missing_frame() {
    let tmp = tempfile::tempdir().unwrap();
    write_seq(tmp.path(), 5, &[1, 3]);
    match load_sequence(tmp.path(), &tmp.path().join("manifest.json")) {
        Err(Error::MissingFrame { index, path }) => {
            assert_eq!(index, 1);
            assert!(path.ends_with("f001.ppm"));
        }
        other => panic!("expected MissingFrame, got {other:?}"),
    }
}

#[test]
fn empty_sequence_is_empty() {
    let tmp = tempfile::tempdir().unwrap();
    write_seq(tmp.path(), 0, &[]);
    assert!(load_sequence(tmp.path(), &tmp.path().join("manifest.json"))
        .unwrap()
        .is_empty());
}

#[test]
fn mismatched_dimensions_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_seq(tmp.path(), 3, &[]);
    let odd = Frame::filled(0, 5, 2, &[1, 2, 3]).unwrap();
    fs::write(tmp.path().join("f002.ppm"), encode_ppm(&odd).unwrap()).unwrap();
    assert!(matches!(
        load_sequence(tmp.path(), &tmp.path().join("manifest.json")),
        Err(Error::Format(_))
    ));
}

#[test]
fn manifest_rejects_bad_fps_and_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("m.json");
    fs::write(&m, r#"{"frame_count":1,"fps":0,"pattern":"f%d.ppm"}"#).unwrap();
    assert!(load_sequence(tmp.path(), &m).is_err());
    fs::write(&m, r#"{"frame_count":1,"fps":5,"pattern":"f%d.ppm","x":1}"#).unwrap();
    assert!(load_sequence(tmp.path(), &m).is_err());
}

fn encode_png(w: u32, h: u32, color: png::ColorType, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header().unwrap().write_image_data(data).unwrap();
    }
    out
}

#[test]
fn png_color_types() {
    let rgb: Vec<u8> = (0..2 * 3 * 3).map(|v| v as u8 * 9).collect();
    let f = decode_png(&encode_png(2, 3, png::ColorType::Rgb, &rgb)).unwrap();
    assert_eq!((f.width(), f.height(), f.channels()), (2, 3, 3));
    assert_eq!(f.pixels(), &rgb[..]);

    let rgba = [1, 2, 3, 255, 4, 5, 6, 0];
    let f = decode_png(&encode_png(2, 1, png::ColorType::Rgba, &rgba)).unwrap();
    assert_eq!(f.pixels(), &[1, 2, 3, 4, 5, 6]);

    let f = decode_png(&encode_png(3, 1, png::ColorType::Grayscale, &[0, 128, 255])).unwrap();
    assert_eq!((f.channels(), f.pixels()), (1, &[0u8, 128, 255][..]));

    assert!(matches!(decode_png(b"\x89PNG garbage"), Err(Error::Format(_))));
}

#[test]
fn read_frame_dispatches_on_extension() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("a.PNG");
    fs::write(&p, encode_png(1, 1, png::ColorType::Rgb, &[9, 8, 7])).unwrap();
    assert_eq!(read_frame(&p).unwrap().pixels(), &[9, 8, 7]);
    let p = tmp.path().join("a.ppm");
    fs::write(&p, b"P6\n# c\n1 1\n255\n\x01\x02\x03").unwrap();
    assert_eq!(read_frame(&p).unwrap().pixels(), &[1, 2, 3]);
}

#[test]
fn ground_truth_errors_carry_row_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("gt.csv");
    fs::write(&p, "start_s,end_s\n1,2\n5,4\n").unwrap();
    match load_ground_truth(&p) {
        Err(Error::Validation { row, .. }) => assert_eq!(row, 3),
        other => panic!("{other:?}"),
    }
    fs::write(&p, "1,2\n\n# note\nx,4\n").unwrap();
    assert!(matches!(load_ground_truth(&p), Err(Error::Parse { row: 4, .. })));
    fs::write(&p, "3,4\n1,2\n").unwrap();
    assert_eq!(load_ground_truth(&p).unwrap().intervals()[0].start_s, 1.0);
}

#[test]
fn detections_file_round_trip_and_order() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("d.csv");
    let d = vec![
        Detection {
            timestamp_s: 0.2,
            score: 0.75,
        },
        Detection {
            timestamp_s: 1.5,
            score: 1.0,
        },
    ];
    write_detections(&d, &p).unwrap();
    assert_eq!(
        fs::read_to_string(&p).unwrap(),
        "timestamp_s,score\n0.200,0.75\n1.500,1\n"
    );
    assert_eq!(load_detections(&p).unwrap(), d);

    let q = tmp.path().join("unsorted.csv");
    assert!(matches!(write_detections(&[d[1], d[0]], &q), Err(Error::Contract(_))));
    assert!(!q.exists());
}
