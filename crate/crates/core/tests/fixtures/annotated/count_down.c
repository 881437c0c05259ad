/*@
  requires n >= 0;
  assigns \nothing;
  ensures \result == 0;
*/
int count_down(int n) {
    int k = n;
    /*@
      loop invariant 0 <= k <= n;
      loop assigns k;
      loop variant k;
    */
    while (k > 0)
        k--;
    return k;
}
