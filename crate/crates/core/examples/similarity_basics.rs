//! Sparse vectors, a hand-built model, and the on-disk formats.

use std::io::Cursor;

use hdsl::sparse_data::{parse_libsvm, write_libsvm};
use hdsl::{BasisId, Model, SparseVector};

fn main() -> hdsl::Result<()> {
    let x = SparseVector::new(6, [(0, 1.0), (2, 0.5)])?;
    let y = SparseVector::new(6, [(0, 0.2), (3, 1.0)])?;
    println!("dot(x, y) = {}", x.dot(&y)?);

    // reward features 2 and 3 co-occurring, penalize 0 against 3
    let model = Model::new(
        2.0,
        6,
        [(BasisId::pos(2, 3), 0.7), (BasisId::neg(0, 3), 0.3)].into_iter().collect(),
    )?;
    println!("similarity(x, y) = {}", model.similarity(&x, &y)?);
    println!("similarity(x, x) = {}", model.similarity(&x, &x)?);
    println!("atoms {}, nnz {}, features {:?}", model.num_atoms(), model.nnz(), model.active_features());

    let text = model.serialize();
    print!("{text}");
    assert_eq!(Model::deserialize(&text)?, model);

    let svm = "1 1:0.5 4:1\n-1 2:0.25\n1 3:1 6:0.75\n";
    let ds = parse_libsvm(Cursor::new(svm), None)?;
    println!("parsed {} points in {} dimensions, mean nnz {:.2}", ds.len(), ds.dim(), ds.mean_nnz());
    let mut out = Vec::new();
    write_libsvm(&ds, &mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}
