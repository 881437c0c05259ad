/*@
  predicate sorted(int *a, integer lo, integer hi) =
    \forall integer i, j; lo <= i <= j < hi ==> a[i] <= a[j];
*/

/*@
  requires n >= 0;
  requires \valid_read(a + (0 .. n - 1));
  assigns \nothing;
  ensures \result == 1 <==> sorted(a, 0, n);
*/
int is_sorted(const int *a, int n) {
    /*@
      loop invariant 0 <= i <= n;
      loop invariant n == 0 || i == 0 || sorted(a, 0, i + 1);
      loop assigns i;
      loop variant n - i;
    */
    for (int i = 0; i + 1 < n; i++) {
        if (a[i] > a[i + 1])
            return 0;
    }
    return 1;
}
