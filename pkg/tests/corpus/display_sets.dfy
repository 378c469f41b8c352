method Wrap(x: int) returns (s: set<int>)
  ensures s == {x}
  ensures x in {x, x + 1} ==> |s| == 1
{
  s := {x};
}
