/*@
  requires b > 0 && a >= 0;
  requires \valid(q) && \valid(r);
  requires \separated(q, r);
  assigns *q, *r;
  ensures *q * b + *r == a;
  ensures 0 <= *r < b;
*/
void divide(int a, int b, int *q, int *r) {
    int quot = 0;
    int rem = a;
    /*@
      loop invariant quot * b + rem == a;
      loop invariant rem >= 0;
      loop assigns quot, rem;
      loop variant rem;
    */
    while (rem >= b) {
        rem -= b;
        quot++;
    }
    *q = quot;
    *r = rem;
}
