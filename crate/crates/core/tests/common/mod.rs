//! Tail probabilities computed offline with 50-digit mpmath.

/// (x, df, upper tail)
pub const CHI2: [(f64, f64, f64); 21] = [
    (0.001, 1.0, 0.9747728793699604),
    (0.5, 1.0, 0.4795001221869535),
    (3.841458820694124, 1.0, 0.05000000000000006),
    (6.634896601021214, 1.0, 0.010000000000000009),
    (10.0, 1.0, 0.0015654022580025497),
    (64.0923, 1.0, 1.1872465037225415e-15),
    (2.0733, 1.0, 0.14989687317127856),
    (29.9395, 1.0, 4.4573913131671366e-08),
    (1.0, 2.0, 0.6065306597126334),
    (9.21034037197618, 2.0, 0.010000000000000014),
    (76.9256, 2.0, 1.9761422407077374e-17),
    (0.3, 3.0, 0.9600284803068776),
    (7.8, 3.0, 0.05033109785985335),
    (25.0, 5.0, 0.00013933379118562619),
    (12.5, 10.0, 0.25298532330929824),
    (3.0, 10.0, 0.9814240637778593),
    (40.0, 20.0, 0.004995412308307587),
    (100.0, 50.0, 3.454931382984864e-05),
    (150.0, 100.0, 0.0009039320423540091),
    (0.01, 4.0, 0.9999875415886458),
    (200.0, 2.0, 3.720075976020836e-44),
];

/// (f, d1, d2, upper tail)
pub const FDIST: [(f64, f64, f64, f64); 21] = [
    (0.5, 1.0, 10.0, 0.49564750438311994),
    (1.0, 2.0, 20.0, 0.38554328942953175),
    (3.0, 2.0, 121.0, 0.05350443549105092),
    (6.3876, 2.0, 121.0, 0.0023056350386206352),
    (14.8625, 2.0, 121.0, 1.6916273791651326e-06),
    (4.7865, 2.0, 121.0, 0.009985855269920758),
    (2.5, 3.0, 30.0, 0.07847395791463867),
    (10.0, 1.0, 5.0, 0.025031015818452945),
    (0.1, 5.0, 5.0, 0.9877580834689302),
    (1.5, 10.0, 10.0, 0.26656768),
    (20.0, 4.0, 60.0, 1.6573037845818946e-10),
    (3.5, 2.0, 2.0, 0.2222222222222222),
    (0.95, 7.0, 40.0, 0.48000500213392266),
    (8.0, 2.0, 1000.0, 0.00035739298684215926),
    (2.0, 1.0, 1.0, 0.3918265520306073),
    (50.0, 3.0, 200.0, 3.7078652387597534e-24),
    (1.2, 30.0, 30.0, 0.31036150244256366),
    (4.0, 6.0, 12.0, 0.019661636945587563),
    (0.01, 2.0, 10.0, 0.9900597211159814),
    (7.5, 2.0, 50.0, 0.001417151211300289),
    (100.0, 2.0, 21050.0, 5.964442977120274e-44),
];
