function Abs(x: int): int
  ensures Abs(x) >= 0
{
  if x < 0 then -x else x
}
