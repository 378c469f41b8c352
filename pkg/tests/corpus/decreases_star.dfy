method Spin(flag: bool)
  decreases *
{
  while flag
    decreases *
  {
  }
}
