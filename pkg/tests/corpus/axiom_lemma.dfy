lemma {:axiom} MulCommutes(a: int, b: int)
  ensures a * b == b * a
