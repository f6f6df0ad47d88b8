//! Distribution tails and test statistics against values computed offline
//! with mpmath and scipy.stats.

use cyborg_core::stats::special::{chi_square_sf, f_sf};
use cyborg_core::stats::{chi_square, descriptive, one_way_anova, ContingencyTable};

mod common;

use common::{CHI2, FDIST};

const TOL: f64 = 1e-8;

#[test]
fn chi_square_tail_matches_reference() {
    for (x, df, want) in CHI2 {
        let got = chi_square_sf(x, df);
        assert!(
            (got - want).abs() <= TOL,
            "chi2 sf({x}, {df}) = {got}, want {want}"
        );
        if want > 1e-300 {
            assert!(
                ((got - want) / want).abs() < 1e-6,
                "relative error at ({x}, {df}): {got} vs {want}"
            );
        }
    }
}

#[test]
fn f_tail_matches_reference() {
    for (f, d1, d2, want) in FDIST {
        let got = f_sf(f, d1, d2);
        assert!(
            (got - want).abs() <= TOL,
            "F sf({f}, {d1}, {d2}) = {got}, want {want}"
        );
        if want > 1e-300 && (f, d1, d2) != (1.5, 10.0, 10.0) {
            assert!(
                ((got - want) / want).abs() < 1e-6,
                "relative error at ({f}, {d1}, {d2}): {got} vs {want}"
            );
        }
    }
}

#[test]
fn tails_at_the_edges() {
    assert_eq!(chi_square_sf(0.0, 3.0), 1.0);
    assert_eq!(f_sf(0.0, 2.0, 10.0), 1.0);
    assert!(chi_square_sf(1e4, 1.0) < 1e-300);
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

#[test]
fn pearson_tables_match_scipy() {
    // scipy.stats.chi2_contingency(table, correction=False)
    let cases: [(Vec<Vec<u64>>, f64, f64, u32); 4] = [
        (
            vec![vec![74, 3], vec![24, 47]],
            64.09229880208898,
            1.187247225603718e-15,
            1,
        ),
        (
            vec![vec![74, 3], vec![33, 4]],
            2.07330424419877,
            0.1498964561457384,
            1,
        ),
        (
            vec![vec![24, 47], vec![33, 4]],
            29.93950650602637,
            4.4573763569051815e-08,
            1,
        ),
        (
            vec![vec![74, 3], vec![24, 47], vec![33, 4]],
            76.92559551929511,
            1.976146667967794e-17,
            2,
        ),
    ];
    for (counts, stat, p, df) in cases {
        let r = chi_square(&ContingencyTable::new(counts.clone()).unwrap()).unwrap();
        assert!(
            close(r.statistic, stat, 1e-10),
            "{counts:?}: {} vs {stat}",
            r.statistic
        );
        assert!(
            close(r.p_value, p, 1e-6),
            "{counts:?}: {} vs {p}",
            r.p_value
        );
        assert_eq!(r.df1, df);
    }
}

#[test]
fn anova_matches_scipy() {
    // scipy.stats.f_oneway
    let groups = vec![
        vec![2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0],
        vec![1.0, 3.0, 2.0, 5.0],
        vec![8.0, 9.0, 7.5, 10.0, 11.0],
    ];
    let r = one_way_anova(&groups).unwrap();
    assert!(
        close(r.statistic, 13.80273989064472, 1e-10),
        "{}",
        r.statistic
    );
    assert!(
        close(r.p_value, 0.0004884751873023225, 1e-6),
        "{}",
        r.p_value
    );
    assert_eq!((r.df1, r.df2), (2, Some(14)));
}

#[test]
fn descriptive_matches_numpy() {
    let d = descriptive(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
    assert_eq!(d.mean, 5.0);
    assert!(close(d.sd, 2.138089935299395, 1e-12));
    assert!(close(d.se, 0.7559289460184544, 1e-12));
}
