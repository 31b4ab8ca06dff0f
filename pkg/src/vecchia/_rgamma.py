"""Taylor coefficients of 1/Gamma(z) about z = 0.

``RGAMMA[k]`` multiplies ``z**(k + 1)``.  Generated with mpmath at 40 digits;
used by the small-argument Bessel series where 1/Gamma(1 +/- mu) and their
symmetric/antisymmetric parts must be free of cancellation as mu -> 0.
"""

RGAMMA = (
    1.0,
    0.5772156649015328606065,
    -0.655878071520253881077,
    -0.042002635034095235529,
    0.1665386113822914895017,
    -0.04219773455554433674821,
    -0.009621971527876973562115,
    0.007218943246663099542395,
    -0.001165167591859065112114,
    -0.0002152416741149509728157,
    0.0001280502823881161861532,
    -0.00002013485478078823865569,
    -0.000001250493482142670657345,
    0.000001133027231981695882374,
    -2.05633841697760710345e-7,
    6.116095104481415817862e-9,
    5.002007644469222930056e-9,
    -1.181274570487020144588e-9,
    1.043426711691100510492e-10,
    7.78226343990507125405e-12,
    -3.696805618642205708188e-12,
    5.100370287454475979015e-13,
    -2.058326053566506783222e-14,
    -5.34812253942301798237e-15,
    1.226778628238260790159e-15,
    -1.181259301697458769514e-16,
    1.18669225475160033258e-18,
    1.412380655318031781556e-18,
)

# odd/even split: gam2(mu) = sum_j ODD[j] mu^(2j), gam1(mu) = -sum_j EVEN[j] mu^(2j)
ODD = RGAMMA[0::2]
EVEN = RGAMMA[1::2]

HALF_INTEGER_TOL = 1e-12
MAX_HALF_ORDER = 30
