/*@
  predicate contains(int *a, integer n, int v) =
    \exists integer k; 0 <= k < n && a[k] == v;
*/

/*@
  requires n >= 0;
  requires \valid_read(a + (0 .. n - 1));
  assigns \nothing;
  behavior found:
    assumes contains(a, n, v);
    ensures 0 <= \result < n;
    ensures a[\result] == v;
  behavior missing:
    assumes !contains(a, n, v);
    ensures \result == -1;
  complete behaviors;
  disjoint behaviors;
*/
int linear_search(int *a, int n, int v) {
    /*@
      loop invariant 0 <= i <= n;
      loop invariant !contains(a, i, v);
      loop assigns i;
      loop variant n - i;
    */
    for (int i = 0; i < n; i++) {
        if (a[i] == v)
            return i;
    }
    return -1;
}
