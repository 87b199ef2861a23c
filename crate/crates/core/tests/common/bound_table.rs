//! Produced by tests/oracles/theorem1_bound.py (mpmath, 60 digits).

/// (W, K, s, C, tv, bound).
pub const BOUND_ORACLE: &[(f64, u64, f64, f64, f64, f64)] = &[
    (0.0, 1, 0.5, 0.3, 0.0, 4.0),
    (0.001, 2, 1.0, 0.3, 0.1, 2.426_666_666_666_666_7),
    (0.01, 3, 2.0, 0.3, 0.5, 3.031_622_776_601_684),
    (0.1, 4, 3.0, 0.3, 1.0, 6.237_126_220_299_338),
    (1.0, 5, 0.5, 0.7978845608028654, 0.25, 39.738_658_169_872_41),
    (0.05, 6, 1.0, 0.7978845608028654, 0.0, 0.437_722_636_256_378_5),
    (0.3, 8, 2.0, 0.7978845608028654, 0.1, 0.970_546_491_029_466_7),
    (0.0, 10, 3.0, 0.7978845608028654, 0.5, 0.0837019575),
    (0.001, 12, 0.5, 1.0, 1.0, 1.024_201_188_843_164_1),
    (0.01, 15, 1.0, 1.0, 0.25, 0.150_339_500_885_792_76),
    (0.1, 20, 2.0, 1.0, 0.0, 0.447_213_688_307_804_34),
    (1.0, 25, 3.0, 1.0, 0.1, 2.924_017_745_781_588_6),
    (0.05, 30, 0.5, 2.5, 0.5, 7.200_000_988_143_905_5),
    (0.3, 40, 1.0, 2.5, 1.0, 4.800_296_828_250_883),
    (0.0, 50, 2.0, 2.5, 0.25, 0.000_000_000_000_000_959_699_563_783_193_4),
    (0.001, 70, 3.0, 2.5, 0.0, 0.003_036_588_971_875_662_6),
    (0.01, 100, 0.5, 0.3, 0.1, 1_111.111_111_111_111_3),
    (0.1, 150, 1.0, 0.3, 0.5, 50.000_000_000_000_01),
    (1.0, 200, 2.0, 0.3, 1.0, 25.819_888_974_716_115),
    (0.05, 500, 3.0, 0.3, 0.25, 0.592_815_550_748_343_8),
    (0.3, 1, 0.5, 0.7978845608028654, 0.0, 4.471_238_898_038_469),
    (0.0, 2, 1.0, 0.7978845608028654, 0.1, 2.42),
    (0.001, 3, 2.0, 0.7978845608028654, 0.5, 3.001_939_057_093_524_3),
    (0.01, 4, 3.0, 0.7978845608028654, 1.0, 6.017_114_858_384_231_5),
    (0.1, 5, 0.5, 1.0, 0.25, 2.968_75),
    (1.0, 6, 1.0, 1.0, 0.0, 6.061_728_395_061_729),
    (0.05, 8, 2.0, 1.0, 0.1, 0.162_027_755_015_080_52),
    (0.3, 10, 3.0, 1.0, 0.5, 0.730_032_364_509_565_1),
    (0.0, 12, 0.5, 2.5, 1.0, 0.880_201_188_843_164_1),
    (0.001, 15, 1.0, 2.5, 0.25, 0.006_339_500_885_792_745),
    (0.01, 20, 2.0, 2.5, 0.0, 0.028_284_364_055_308_28),
    (0.1, 25, 3.0, 2.5, 0.1, 0.215_443_476_571_910_87),
    (1.0, 30, 0.5, 0.3, 0.5, 10_000.000_000_988_144),
    (0.05, 40, 1.0, 0.3, 1.0, 6.666_963_494_917_551),
    (0.3, 50, 2.0, 0.3, 0.25, 3.872_983_346_207_418),
    (0.0, 70, 3.0, 0.3, 0.0, 0.000_000_000_000_000_000_000_000_000_033_388_908_809_508_657),
    (0.001, 100, 0.5, 0.7978845608028654, 0.1, 15.707_963_267_948_964),
    (0.01, 150, 1.0, 0.7978845608028654, 0.5, 1.879_971_205_973_250_3),
    (0.1, 200, 2.0, 0.7978845608028654, 1.0, 1.583_233_487_086_159_5),
    (1.0, 500, 3.0, 0.7978845608028654, 0.25, 8.557_429_192_115_828),
    (0.05, 1, 0.5, 1.0, 0.0, 4.05),
    (0.3, 2, 1.0, 1.0, 0.1, 3.02),
    (0.0, 3, 2.0, 1.0, 0.5, 3.0),
    (0.001, 4, 3.0, 1.0, 1.0, 6.001_587_401_051_968),
    (0.01, 5, 0.5, 2.5, 0.25, 0.508_75),
    (0.1, 6, 1.0, 2.5, 0.0, 0.301_728_395_061_728_4),
    (1.0, 8, 2.0, 2.5, 0.1, 1.809_460_780_777_602_9),
    (0.05, 10, 3.0, 2.5, 0.5, 0.163_072_010_098_41),
    (0.3, 12, 0.5, 0.3, 1.0, 480.880_201_188_843_16),
    (0.0, 15, 1.0, 0.3, 0.25, 0.000_339_500_885_792_744_67),
    (0.01, 200, 1.0, 0.7978845608028654, 0.1, 2.506_628_274_631_000_2),
];
