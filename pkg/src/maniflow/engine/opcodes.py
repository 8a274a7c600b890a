"""Opcode table shared by the Cython and pure-Python tape engines.

Each tape node applies one primitive to the per-lane values of its inputs.
A node is a program scalar; lanes are independent evaluation points that
move through the recorded program in lockstep.
"""

CONST = 0
LEAF = 1
ADD = 2
SUB = 3
MUL = 4
DIV = 5
NEG = 6
SIN = 7
COS = 8
TAN = 9
ATAN = 10
ATAN2 = 11  # apply(ATAN2, y, x)
EXP = 12
LOG = 13
SQRT = 14
POWC = 15  # x ** c, constant exponent in aux_f
TANH = 16
RELU = 17
MIN = 18
MAX = 19
ABS = 20
DOT = 21  # fused sum of pairwise products over two equal-length input lists
WHERE = 22  # lane mask is constant; where(mask, a, b)
GATHER = 23  # per-lane pick among K inputs; index lanes are constant
WRAP = 24  # fmod into [0, 2pi); derivative 1

NAMES = {
    CONST: "const",
    LEAF: "leaf",
    ADD: "add",
    SUB: "sub",
    MUL: "mul",
    DIV: "div",
    NEG: "neg",
    SIN: "sin",
    COS: "cos",
    TAN: "tan",
    ATAN: "atan",
    ATAN2: "atan2",
    EXP: "exp",
    LOG: "log",
    SQRT: "sqrt",
    POWC: "pow",
    TANH: "tanh",
    RELU: "relu",
    MIN: "min",
    MAX: "max",
    ABS: "abs",
    DOT: "dot",
    WHERE: "where",
    GATHER: "gather",
    WRAP: "wrap",
}

# name -> opcode for the string-based record() entry point
BY_NAME = {v: k for k, v in NAMES.items()}

UNARY = {NEG, SIN, COS, TAN, ATAN, EXP, LOG, SQRT, POWC, TANH, RELU, ABS, WRAP}
BINARY = {ADD, SUB, MUL, DIV, ATAN2, MIN, MAX}
