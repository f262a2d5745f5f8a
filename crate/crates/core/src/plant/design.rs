use crate::lti::{Polynomial, PolynomialRatio, TransferMatrix};

/// Common denominator of the published design plant.
pub const DESIGN_DEN: [f64; 4] = [1.0, 80.13, 1327.0, 2813.0];
pub const DESIGN_NUM_11: [f64; 3] = [20.26, 1171.0, 1061.0];
pub const DESIGN_NUM_12: [f64; 2] = [23267.0, 170261.0];
pub const DESIGN_NUM_21: [f64; 2] = [1.024, 40.38];
pub const DESIGN_NUM_22: [f64; 2] = [-174.6, -2902.0];

/// Published 2×2 design model from (v_cm [V], u_om [-]) to (W_cp [g/s], p_sm [bar]),
/// in deviation coordinates about 190 A, 180 V, 0.45.
pub fn design_plant() -> TransferMatrix {
    let e = |num: &[f64]| {
        PolynomialRatio::new(Polynomial::from_raw(num.to_vec()), Polynomial::from_raw(DESIGN_DEN.to_vec()))
            .expect("monic denominator")
    };
    TransferMatrix::from_rows(vec![
        vec![e(&DESIGN_NUM_11), e(&DESIGN_NUM_12)],
        vec![e(&DESIGN_NUM_21), e(&DESIGN_NUM_22)],
    ])
    .expect("2x2")
}
