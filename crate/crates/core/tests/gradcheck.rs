//! Central-difference gradient checks in double precision.

mod common;

#[test]
fn outer_vae_loss_gradients() {
    for point in 0..10 {
        common::outer_point(point);
    }
}

#[test]
fn corr_loss_gradients() {
    for point in 0..10 {
        common::corr_point(point);
    }
}

#[test]
fn inner_total_loss_gradients() {
    for point in 0..10 {
        common::inner_total_point(point);
    }
}
