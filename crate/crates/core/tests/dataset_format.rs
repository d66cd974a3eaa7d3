use std::fs;

use icaoct::dataset::{
    create_dataset, generate_examples, load_dataset, read_dataset, write_dataset, DatasetHeader, GeneratorConfig,
};
use icaoct::Error;
use proptest::prelude::*;

fn desk(count: u64, seed: u64) -> (DatasetHeader, Vec<icaoct::dataset::Example>) {
    let cfg = GeneratorConfig::desk();
    let ex = generate_examples(&cfg, seed, 0, count, 1).unwrap();
    (DatasetHeader::new(cfg, count, seed), ex)
}

#[test]
fn two_default_examples_have_the_documented_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("two.icad");
    let cfg = GeneratorConfig::default();
    create_dataset(&path, &cfg, 2, 5, 1).unwrap();
    let header = DatasetHeader::new(cfg, 2, 5);
    let expected = 20 + header.to_text().len() as u64 + 2 * (50 * 1024 + 1024) * 4;
    assert_eq!(fs::metadata(&path).unwrap().len(), expected);
    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], &[0x49, 0x43, 0x41, 0x44]);
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
}

#[test]
fn empty_dataset_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.icad");
    let (header, _) = desk(0, 1);
    assert_eq!(write_dataset(&path, &header, Vec::new()).unwrap(), 0);
    let (h, ex) = load_dataset(&path).unwrap();
    assert_eq!(h.example_count, 0);
    assert!(ex.is_empty());
}

#[test]
fn parallel_generation_matches_serial() {
    let cfg = GeneratorConfig::default();
    let serial = generate_examples(&cfg, 77, 0, 8, 1).unwrap();
    let parallel = generate_examples(&cfg, 77, 0, 8, 4).unwrap();
    assert_eq!(serial, parallel);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.icad"), dir.path().join("b.icad"));
    create_dataset(&a, &cfg, 8, 77, 1).unwrap();
    create_dataset(&b, &cfg, 8, 77, 3).unwrap();
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn bad_magic_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.icad");
    let (header, ex) = desk(2, 3);
    write_dataset(&path, &header, ex.into_iter().map(Ok)).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    bytes[..4].copy_from_slice(b"XXXX");
    fs::write(&path, bytes).unwrap();
    assert!(matches!(read_dataset(&path), Err(Error::Format { .. })));
}

#[test]
fn truncation_names_the_example() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.icad");
    let (header, ex) = desk(3, 3);
    write_dataset(&path, &header, ex.into_iter().map(Ok)).unwrap();
    let len = fs::metadata(&path).unwrap().len();
    let per = header.example_bytes();
    // cut inside the third example
    fs::write(&path, &fs::read(&path).unwrap()[..(len - per / 2) as usize]).unwrap();
    match read_dataset(&path) {
        Err(Error::Corrupt { example, offset, .. }) => {
            assert_eq!(example, 2);
            assert_eq!(offset, len - per);
        }
        other => panic!("expected corruption error, got {:?}", other.err()),
    }
    let message = read_dataset(&path).err().unwrap().to_string();
    assert!(message.contains("example 2"), "{message}");
}

#[test]
fn mismatched_dimensions_are_refused_and_nothing_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.icad");
    let (_, ex) = desk(1, 3);
    let header = DatasetHeader::new(GeneratorConfig::default(), 1, 3);
    assert!(matches!(
        write_dataset(&path, &header, ex.into_iter().map(Ok)),
        Err(Error::ShapeMismatch { .. })
    ));
    assert!(!path.exists());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn write_then_read_is_identity(count in 0u64..6, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.icad");
        let (header, ex) = desk(count, seed);
        prop_assert_eq!(write_dataset(&path, &header, ex.clone().into_iter().map(Ok)).unwrap(), count);
        let (h, back) = load_dataset(&path).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(back, ex);
    }

    #[test]
    fn examples_depend_only_on_seed_and_index(seed in any::<u64>(), first in 0u64..50) {
        let cfg = GeneratorConfig::desk();
        let run = generate_examples(&cfg, seed, 0, first + 2, 1).unwrap();
        let tail = generate_examples(&cfg, seed, first, 2, 2).unwrap();
        prop_assert_eq!(&run[first as usize..], &tail[..]);
    }
}
