use std::time::Instant;
fn main() {
    let op = sxrm::operators::gen_gaussian(50, 39, 2, 42).unwrap();
    let mut rng = sxrm::sampling::trial_rng(42, 1);
    let x = sxrm::sampling::random_psd(&mut rng, 50, 10);
    let t0 = Instant::now();
    let y = sxrm::operators::apply(&op, &x).unwrap();
    println!("apply: {:?}", t0.elapsed());
    let t1 = Instant::now();
    let res = sxrm::recovery::recover(&op, &y, &sxrm::recovery::RecoveryConfig::default()).unwrap();
    println!("recover: {:?} status {:?} r={}", t1.elapsed(), res.status, res.subspace_dim);
}
