use std::fs;
use std::path::Path;

use sdcnet::data::{load_cifar10, load_cifar100, synthetic_records, write_records, CifarFormat, Record, RECORDS_PER_CIFAR10_FILE};
use sdcnet::Error;

fn cifar10_tree(root: &Path, per_file: usize) -> Vec<Vec<Record>> {
    let dir = root.join("cifar-10-batches-bin");
    fs::create_dir_all(&dir).unwrap();
    let names = ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"];
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let records = synthetic_records(per_file, CifarFormat::Cifar10, i as u64);
            write_records(&dir.join(name), &records, CifarFormat::Cifar10).unwrap();
            records
        })
        .collect()
}

#[test]
fn full_size_cifar10_layout() {
    let root = tempfile::tempdir().unwrap();
    let files = cifar10_tree(root.path(), RECORDS_PER_CIFAR10_FILE);
    let len = fs::metadata(root.path().join("cifar-10-batches-bin/data_batch_3.bin")).unwrap().len();
    assert_eq!(len, 30_730_000);

    let (train, test) = load_cifar10(root.path()).unwrap();
    assert_eq!(train.len(), 50_000);
    assert_eq!(test.len(), 10_000);
    assert_eq!(train.record(0), files[0][0]);
    assert_eq!(train.record(10_000 * 4 + 17), files[4][17]);
    assert_eq!(test.record(9_999), files[5][9_999]);
    assert_eq!(test.stats, train.stats);
}

#[test]
fn wrong_record_count_names_file() {
    let root = tempfile::tempdir().unwrap();
    cifar10_tree(root.path(), 3);
    match load_cifar10(root.path()) {
        Err(Error::Format { path, message }) => {
            assert!(path.ends_with("data_batch_1.bin"));
            assert!(message.contains("9219"), "{message}");
        }
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn partial_record_is_format_error() {
    let root = tempfile::tempdir().unwrap();
    cifar10_tree(root.path(), RECORDS_PER_CIFAR10_FILE);
    let path = root.path().join("cifar-10-batches-bin/test_batch.bin");
    let mut bytes = fs::read(&path).unwrap();
    bytes.pop();
    fs::write(&path, bytes).unwrap();
    assert!(matches!(load_cifar10(root.path()), Err(Error::Format { path: p, .. }) if p == path));
}

#[test]
fn missing_file_and_dir() {
    let root = tempfile::tempdir().unwrap();
    assert!(matches!(load_cifar10(&root.path().join("absent")), Err(Error::NotFound(_))));
    cifar10_tree(root.path(), RECORDS_PER_CIFAR10_FILE);
    fs::remove_file(root.path().join("cifar-10-batches-bin/data_batch_5.bin")).unwrap();
    assert!(matches!(load_cifar10(root.path()), Err(Error::NotFound(p)) if p.ends_with("data_batch_5.bin")));
}

#[test]
fn cifar100_fine_labels() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("cifar-100-binary");
    fs::create_dir_all(&dir).unwrap();
    let train = synthetic_records(50_000, CifarFormat::Cifar100, 1);
    let test = synthetic_records(10_000, CifarFormat::Cifar100, 2);
    write_records(&dir.join("train.bin"), &train, CifarFormat::Cifar100).unwrap();
    write_records(&dir.join("test.bin"), &test, CifarFormat::Cifar100).unwrap();
    assert_eq!(fs::metadata(dir.join("test.bin")).unwrap().len(), 10_000 * 3074);
    let (tr, te) = load_cifar100(root.path()).unwrap();
    assert_eq!(tr.classes, 100);
    assert_eq!(tr.labels()[..50], train[..50].iter().map(|r| r.label as usize).collect::<Vec<_>>()[..]);
    assert_eq!(te.record(5), test[5]);
}
