class Cell {
  var data: int

  twostate predicate Bigger()
    reads this
  {
    old(data) <= data
  }
}
