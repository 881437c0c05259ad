/*@
  assigns \nothing;
  behavior negative:
    assumes x < 0;
    ensures \result == -1;
  behavior zero:
    assumes x == 0;
    ensures \result == 0;
  behavior positive:
    assumes x > 0;
    ensures \result == 1;
  complete behaviors;
  disjoint behaviors;
*/
int sign(int x) {
    if (x < 0)
        return -1;
    return x > 0;
}
