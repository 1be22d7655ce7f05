use intvit::intmath::{int_div, int_isqrt, shift_exp, shift_exp_int, unit_integer, IntMathConfig};
use intvit::Error;

const CFG: IntMathConfig = IntMathConfig {
    n: 15,
    m: 47,
    iters: 10,
};
const SCALES: [f64; 4] = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 64.0, 1.0 / 128.0];

#[test]
fn shift_exp_is_monotone_over_the_16_bit_range() {
    for s in SCALES {
        let i0 = unit_integer(s).unwrap();
        let mut prev = shift_exp_int(-(1 << 15), i0, CFG.n);
        for i in -(1 << 15) + 1..=0 {
            let e = shift_exp_int(i, i0, CFG.n);
            assert!(e >= prev, "S={s} I={i}: {e} < {prev}");
            assert!((0..=i0 << CFG.n).contains(&e));
            prev = e;
        }
    }
}

#[test]
fn shift_exp_of_zero_is_one() {
    for s in SCALES {
        let e = shift_exp(0, s, &CFG).unwrap();
        assert_eq!(e.mantissa, unit_integer(s).unwrap() << CFG.n);
        assert!((e.mantissa as f64 * e.scale - 1.0).abs() < 1e-12);
    }
}

#[test]
fn shift_exp_rejects_positive_input() {
    assert!(matches!(shift_exp(1, 0.125, &CFG), Err(Error::Domain(_))));
}

#[test]
fn shift_exp_tracks_the_exponential() {
    for s in SCALES {
        for i in (-(1i64 << 12)..=0).step_by(7) {
            let e = shift_exp(i, s, &CFG).unwrap();
            let got = e.mantissa as f64 * e.scale;
            let want = (i as f64 * s).exp();
            // linear 2^-r fit (about 6.1%), log2(e) taken as 1.0111b, and the
            // floor shifts moving the base-2 exponent by up to one step of S
            let drift = 2f64.powf(-(i as f64) * s * (std::f64::consts::LOG2_E - 1.4375) + s);
            let bound = want * (1.062 * drift - 1.0) + 2.0 * e.scale;
            assert!((got - want).abs() <= bound, "S={s} I={i}: {got} vs {want}");
        }
    }
}

#[test]
fn int_div_of_equal_operands_saturates() {
    for k in [4u8, 8, 16] {
        for i2 in [1i64, 3, 1000, (1 << 31) - 1] {
            let (q, s) = int_div(i2, i2, k, &CFG).unwrap();
            assert_eq!(q, (1 << (k - 1)) - 1);
            assert_eq!(s, 1.0 / (1u64 << (k - 1)) as f64);
        }
    }
}

#[test]
fn int_div_rejects_bad_operands() {
    assert!(matches!(int_div(1, 0, 8, &CFG), Err(Error::Domain(_))));
    assert!(int_div(5, 4, 8, &CFG).is_err());
    assert!(int_div(-1, 4, 8, &CFG).is_err());
    assert!(int_div(1, 4, 17, &CFG).is_err());
}

#[test]
fn isqrt_is_exact_on_squares_and_neighbours() {
    for r in (0i64..46341).step_by(13) {
        let sq = r * r;
        assert_eq!(int_isqrt(sq, CFG.iters), r);
        if r > 0 {
            assert!((int_isqrt(sq - 1, CFG.iters) - (r - 1)).abs() <= 1);
        }
    }
}
