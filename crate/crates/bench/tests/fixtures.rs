use ssmp_bench::{alignment_problem, concatenated, index_sequences, standard_pair};
use ssmp_core::align::align_narrations;

#[test]
fn fixtures_have_the_advertised_shapes() {
    let pair = standard_pair(1);
    let x = concatenated(&pair);
    assert_eq!(x.shape(), (76, 32));
    assert_eq!(x.row(64), &pair.trailer.to_matrix().row(0)[..]);

    let (a, b) = index_sequences(64);
    assert_eq!((a.len(), b.len()), (64, 64));
    assert_ne!(a, b);

    let problem = alignment_problem(8, 40);
    problem.validate().unwrap();
    assert_eq!(align_narrations(&problem).unwrap().assignments.len(), 8);
}
