import math
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Final, Generic, Literal, NamedTuple, TypeAlias, TypeVar


class Location(NamedTuple):
    line: int
    column: int
    offset: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class TokenType(Enum):
    NUMBER = auto()
    PLUS = auto()
    MINUS = auto()
    STAR = auto()
    SLASH = auto()
    CARET = auto()
    NAME = auto()
    LPAREN = auto()
    RPAREN = auto()


class Token(NamedTuple):
    type: TokenType
    text: str
    location: Location


class ExprError(Exception):
    pass


class SyntaxError(ExprError):
    def __init__(self, msg: str, location: Location | None) -> None:
        super().__init__(f"{msg} at {location}" if location else msg)
        self.location = location


class UnknownName(SyntaxError):
    pass


class UnknownFunction(SyntaxError):
    pass


class DomainError(ExprError):
    def __init__(self, msg: str, subexpr: "Expr") -> None:
        super().__init__(f"{msg} in '{unparse(subexpr)}'")
        self.subexpr = subexpr


class OutsideDomain(ExprError):
    pass


class _Nothing(Enum):
    NOTHING = auto()


_NothingType = Literal[_Nothing.NOTHING]
_NOTHING: Final[_NothingType] = _Nothing.NOTHING

_T = TypeVar("_T")


class Peekable(Generic[_T], Iterator[_T]):
    def __init__(self, it: Iterable[_T]) -> None:
        self._it = iter(it)
        self._peeked: _T | _NothingType = _NOTHING

    def peek(self) -> _T | None:
        if self._peeked is not _NOTHING:
            return self._peeked
        self._peeked = next(self._it, _NOTHING)
        if self._peeked is not _NOTHING:
            return self._peeked
        return None

    def unpeek(self, val: _T) -> None:
        assert self._peeked is _NOTHING
        self._peeked = val

    def __iter__(self) -> Iterator[_T]:
        return self

    def __next__(self) -> _T:
        if self._peeked is not _NOTHING:
            val = self._peeked
            self._peeked = _NOTHING
        else:
            val = next(self._it)
        return val


_ONE_CHAR: Final[Mapping[str, TokenType]] = {
    "+": TokenType.PLUS,
    "-": TokenType.MINUS,
    "*": TokenType.STAR,
    "/": TokenType.SLASH,
    "^": TokenType.CARET,
    "(": TokenType.LPAREN,
    ")": TokenType.RPAREN,
}


def tokenize(text: str) -> Iterator[Token]:
    it = Peekable(enumerate(text))
    line = col = 1

    for offset, c in it:
        loc = Location(line, col, offset)
        if c == "\n":
            line += 1
            col = 1
        else:
            col += 1

        if c.isspace():
            continue

        if c in _ONE_CHAR:
            yield Token(_ONE_CHAR[c], c, loc)
        elif c.isalpha() or c == "_":
            name = c
            for item in it:
                if not item[1].isalnum() and item[1] != "_":
                    it.unpeek(item)
                    break
                col += 1
                name += item[1]
            yield Token(TokenType.NAME, name, loc)
        elif c.isdigit() or c == ".":
            num, col = _scan_number(it, c, loc, col)
            yield Token(TokenType.NUMBER, num, loc)
        else:
            raise SyntaxError(f"Unexpected '{c}'", loc)


def _scan_number(
    it: Peekable[tuple[int, str]], first: str, loc: Location, col: int
) -> tuple[str, int]:
    num = first
    has_dot = first == "."
    has_exp = False
    for item in it:
        c2 = item[1]
        if c2 == ".":
            if has_dot or has_exp:
                raise SyntaxError("Number with multiple decimals", loc)
            has_dot = True
        elif c2 in "eE" and not has_exp:
            has_exp = True
            num += c2
            col += 1
            sign = it.peek()
            if sign is not None and sign[1] in "+-":
                next(it)
                num += sign[1]
                col += 1
            digit = it.peek()
            if digit is None or not digit[1].isdigit():
                raise SyntaxError("Malformed exponent", loc)
            continue
        elif not c2.isdigit():
            it.unpeek(item)
            break
        col += 1
        num += c2
    if num == ".":
        raise SyntaxError("Expected digits after '.'", loc)
    return num, col


# Expression tree. Nodes are immutable tuples; a variable carries its
# coordinate index so evaluation never looks names up.


class Const(NamedTuple):
    value: float

    def __str__(self) -> str:
        return unparse(self)


class Var(NamedTuple):
    name: str
    index: int

    def __str__(self) -> str:
        return unparse(self)


class Unary(NamedTuple):
    op: str
    arg: "Expr"

    def __str__(self) -> str:
        return unparse(self)


class Binary(NamedTuple):
    op: str
    left: "Expr"
    right: "Expr"

    def __str__(self) -> str:
        return unparse(self)


Expr: TypeAlias = Const | Var | Unary | Binary

ZERO: Final = Const(0.0)
ONE: Final = Const(1.0)

FUNCTIONS: Final[frozenset[str]] = frozenset(
    {"sin", "cos", "tan", "exp", "log", "sqrt"}
)


@dataclass(frozen=True)
class Chart:
    names: tuple[str, ...]
    domain: tuple[tuple[float, float], ...] | None = None
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        names = tuple(self.names)
        if not names:
            raise ValueError("A chart needs at least one coordinate")
        if len(set(names)) != len(names):
            raise ValueError(f"Coordinate names must be distinct, got {names}")
        for name in names:
            if name in FUNCTIONS or not (name[0].isalpha() or name[0] == "_"):
                raise ValueError(f"Invalid coordinate name '{name}'")
        if self.domain is None:
            domain = tuple((-math.inf, math.inf) for _ in names)
        else:
            domain = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        if len(domain) != len(names):
            raise ValueError("Domain box must have one interval per coordinate")
        for name, (lo, hi) in zip(names, domain):
            if not lo < hi:
                raise ValueError(f"Empty domain interval for '{name}'")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @property
    def dimension(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self._index[name]

    def contains(self, point: Sequence[float]) -> bool:
        return len(point) == self.dimension and all(
            lo < x < hi for x, (lo, hi) in zip(point, self.domain)
        )

    def check(self, point: Sequence[float]) -> None:
        if len(point) != self.dimension:
            raise OutsideDomain(
                f"Point has {len(point)} coordinates, chart has {self.dimension}"
            )
        for name, x, (lo, hi) in zip(self.names, point, self.domain):
            if not lo < x < hi:
                raise OutsideDomain(f"{name}={x} outside ({lo}, {hi})")


# Smart constructors: constant folding and identity elimination only.


def const(value: float) -> Const:
    return Const(float(value))


def _try_fold(node: Expr) -> Expr:
    try:
        return Const(_evaluate(node, ()))
    except (DomainError, ArithmeticError, ValueError):
        return node


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if b == ZERO:
        return a
    if a == ZERO:
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if isinstance(a, Const):
        if a.value == -1.0:
            return neg(b)
        if isinstance(b, Binary) and b.op == "*" and isinstance(b.left, Const):
            return mul(Const(a.value * b.left.value), b.right)
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _try_fold(Binary("/", a, b))
    if b == ONE:
        return a
    if a == ZERO:
        return ZERO
    return Binary("/", a, b)


def power(base: Expr, exponent: float) -> Expr:
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Const):
        return _try_fold(Binary("^", base, Const(float(exponent))))
    return Binary("^", base, Const(float(exponent)))


def call(func: str, arg: Expr) -> Expr:
    if func not in FUNCTIONS:
        raise ValueError(f"Unknown function '{func}'")
    if isinstance(arg, Const):
        return _try_fold(Unary(func, arg))
    return Unary(func, arg)


# The following is a Pratt parser producing an expression tree.


class _BinaryOp(NamedTuple):
    lbp: int
    build: Callable[[Expr, Expr], Expr] | None
    associativity: Literal["left", "right"] = "left"


_BINARY_OPS: Final[Mapping[TokenType, _BinaryOp]] = {
    TokenType.RPAREN: _BinaryOp(0, None),
    TokenType.PLUS: _BinaryOp(1, add),
    TokenType.MINUS: _BinaryOp(1, sub),
    TokenType.STAR: _BinaryOp(2, mul),
    TokenType.SLASH: _BinaryOp(2, div),
    TokenType.CARET: _BinaryOp(4, None, "right"),
}

_UNARY_MINUS_RBP: Final = 3


def parse(src: str, chart: Chart) -> Expr:
    if not src.strip():
        raise SyntaxError("Empty expression", None)
    tokens = Peekable(tokenize(src))
    result = _parse_expr(chart, tokens)
    leftover = tokens.peek()
    if leftover is not None:
        raise SyntaxError(f"Unexpected '{leftover.text}'", leftover.location)
    return result


def _parse_expr(chart: Chart, tokens: Peekable[Token], rbp: int = 0) -> Expr:
    try:
        tok = next(tokens)
    except StopIteration:
        raise SyntaxError("Unexpected end of input, expected expression", None)
    left = _nud(chart, tokens, tok)
    while (tok := tokens.peek()) and (
        # If the token isn't a valid binop let _led handle the error
        tok.type not in _BINARY_OPS
        or rbp < _BINARY_OPS[tok.type].lbp
    ):
        left = _led(chart, tokens, left, next(tokens))
    return left


def _expect_rparen(tokens: Peekable[Token], opener: Token) -> None:
    rparen = next(tokens, None)
    if not rparen or rparen.type != TokenType.RPAREN:
        loc = (
            rparen.location
            if rparen
            else opener.location._replace(
                column=opener.location.column + len(opener.text) + 1,
                offset=opener.location.offset + len(opener.text) + 1,
            )
        )
        raise SyntaxError("Expected right parenthesis", loc)


def _nud(chart: Chart, tokens: Peekable[Token], token: Token) -> Expr:
    if token.type == TokenType.NUMBER:
        return Const(float(token.text))
    elif token.type == TokenType.NAME:
        following = tokens.peek()
        if following is not None and following.type == TokenType.LPAREN:
            if token.text not in FUNCTIONS:
                raise UnknownFunction(
                    f"Unknown function '{token.text}'", token.location
                )
            opener = next(tokens)
            arg = _parse_expr(chart, tokens)
            _expect_rparen(tokens, opener)
            return call(token.text, arg)
        try:
            return Var(token.text, chart.index(token.text))
        except KeyError:
            raise UnknownName(f"Unknown name '{token.text}'", token.location)
    elif token.type == TokenType.MINUS:
        return neg(_parse_expr(chart, tokens, _UNARY_MINUS_RBP))
    elif token.type == TokenType.LPAREN:
        inner = _parse_expr(chart, tokens)
        _expect_rparen(tokens, token)
        return inner
    else:
        raise SyntaxError(
            f"Unexpected '{token.text}', expected expression", token.location
        )


def _led(chart: Chart, tokens: Peekable[Token], left: Expr, token: Token) -> Expr:
    op = _BINARY_OPS.get(token.type)
    if op is None or token.type == TokenType.RPAREN:
        raise SyntaxError(
            f"Unexpected '{token.text}', expected operator", token.location
        )
    right = _parse_expr(
        chart, tokens, op.lbp if op.associativity == "left" else op.lbp - 1
    )
    if token.type == TokenType.CARET:
        if not isinstance(right, Const):
            raise SyntaxError("Exponent must be a constant", token.location)
        return power(left, right.value)
    return op.build(left, right)


# Evaluation


def evaluate(e: Expr, point: Sequence[float]) -> float:
    return _evaluate(e, point)


def _apply_unary(node: Unary, x: float) -> float:
    op = node.op
    if op == "neg":
        return -x
    if op == "sin":
        return math.sin(x)
    if op == "cos":
        return math.cos(x)
    if op == "tan":
        return math.tan(x)
    if op == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            raise DomainError("Overflow", node)
    if op == "log":
        if x <= 0:
            raise DomainError(f"Logarithm of non-positive value {x}", node)
        return math.log(x)
    if op == "sqrt":
        if x < 0:
            raise DomainError(f"Square root of negative value {x}", node)
        return math.sqrt(x)
    raise NotImplementedError(op)


def _apply_binary(node: Binary, a: float, b: float) -> float:
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise DomainError("Division by zero", node)
        return a / b
    if op == "^":
        if b.is_integer():
            if a == 0 and b < 0:
                raise DomainError("Zero raised to a negative power", node)
            return a ** int(b)
        if a <= 0:
            raise DomainError(f"Non-integer power of non-positive value {a}", node)
        return a**b
    raise NotImplementedError(op)


def _evaluate(e: Expr, point: Sequence[float]) -> float:
    match e:
        case Const(value):
            return value
        case Var(_, index):
            return float(point[index])
        case Unary(_, arg):
            return _apply_unary(e, _evaluate(arg, point))
        case Binary(_, left, right):
            return _apply_binary(e, _evaluate(left, point), _evaluate(right, point))
    raise TypeError(f"Not an expression: {e!r}")


def lambdify(e: Expr) -> Callable[[Sequence[float]], float]:
    """Compile ``e`` into a closure; cheaper than ``evaluate`` in inner loops."""
    match e:
        case Const(value):
            return lambda point: value
        case Var(_, index):
            return lambda point: float(point[index])
        case Unary(_, arg):
            f = lambdify(arg)
            return lambda point: _apply_unary(e, f(point))
        case Binary(_, left, right):
            f, g = lambdify(left), lambdify(right)
            return lambda point: _apply_binary(e, f(point), g(point))
    raise TypeError(f"Not an expression: {e!r}")


# Differentiation


def differentiate(e: Expr, var: str) -> Expr:
    match e:
        case Const():
            return ZERO
        case Var(name, _):
            return ONE if name == var else ZERO
        case Unary(op, arg):
            darg = differentiate(arg, var)
            if darg == ZERO:
                return ZERO
            if op == "neg":
                return neg(darg)
            return mul(_outer_derivative(op, arg), darg)
        case Binary("+", left, right):
            return add(differentiate(left, var), differentiate(right, var))
        case Binary("-", left, right):
            return sub(differentiate(left, var), differentiate(right, var))
        case Binary("*", left, right):
            return add(
                mul(differentiate(left, var), right),
                mul(left, differentiate(right, var)),
            )
        case Binary("/", left, right):
            dleft, dright = differentiate(left, var), differentiate(right, var)
            if dright == ZERO:
                return div(dleft, right)
            return div(sub(mul(dleft, right), mul(left, dright)), power(right, 2))
        case Binary("^", base, Const(exponent)):
            dbase = differentiate(base, var)
            return mul(mul(Const(exponent), power(base, exponent - 1)), dbase)
    raise TypeError(f"Not an expression: {e!r}")


def _outer_derivative(op: str, arg: Expr) -> Expr:
    if op == "sin":
        return call("cos", arg)
    if op == "cos":
        return neg(call("sin", arg))
    if op == "tan":
        return div(ONE, power(call("cos", arg), 2))
    if op == "exp":
        return call("exp", arg)
    if op == "log":
        return div(ONE, arg)
    if op == "sqrt":
        return div(ONE, mul(Const(2.0), call("sqrt", arg)))
    raise NotImplementedError(op)


def gradient(e: Expr, chart: Chart) -> tuple[Expr, ...]:
    return tuple(differentiate(e, name) for name in chart.names)


def variables(e: Expr) -> frozenset[str]:
    match e:
        case Const():
            return frozenset()
        case Var(name, _):
            return frozenset({name})
        case Unary(_, arg):
            return variables(arg)
        case Binary(_, left, right):
            return variables(left) | variables(right)
    raise TypeError(f"Not an expression: {e!r}")


# Printing

_PRECEDENCE: Final[Mapping[str, int]] = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_ATOM: Final = 5


def _format_number(value: float) -> str:
    if math.isfinite(value) and value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _precedence(e: Expr) -> int:
    match e:
        case Const(value):
            return 3 if value < 0 else _ATOM
        case Unary("neg", _):
            return 3
        case Binary(op, _, _):
            return _PRECEDENCE[op]
    return _ATOM


def unparse(e: Expr) -> str:
    match e:
        case Const(value):
            return _format_number(value)
        case Var(name, _):
            return name
        case Unary("neg", arg):
            inner = unparse(arg)
            return f"-({inner})" if _precedence(arg) <= 3 else f"-{inner}"
        case Unary(op, arg):
            return f"{op}({unparse(arg)})"
        case Binary("^", base, Const(exponent)):
            left = unparse(base)
            if _precedence(base) <= _PRECEDENCE["^"]:
                left = f"({left})"
            right = _format_number(exponent)
            return f"{left}^({right})" if exponent < 0 else f"{left}^{right}"
        case Binary(op, left, right):
            p = _PRECEDENCE[op]
            ltext, rtext = unparse(left), unparse(right)
            if _precedence(left) < p:
                ltext = f"({ltext})"
            if _precedence(right) <= p:
                rtext = f"({rtext})"
            return f"{ltext}{op}{rtext}" if p > 1 else f"{ltext} {op} {rtext}"
    raise TypeError(f"Not an expression: {e!r}")
