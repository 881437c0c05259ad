/*@
  predicate sorted(int *a, integer n) =
    \forall integer i, j; 0 <= i <= j < n ==> a[i] <= a[j];
*/

/*@
  requires n >= 0;
  requires \valid_read(a + (0 .. n - 1));
  requires sorted(a, n);
  assigns \nothing;
  behavior hit:
    assumes \exists integer k; 0 <= k < n && a[k] == v;
    ensures 0 <= \result < n && a[\result] == v;
  behavior miss:
    assumes \forall integer k; 0 <= k < n ==> a[k] != v;
    ensures \result == -1;
  complete behaviors;
  disjoint behaviors;
*/
int binary_search(const int *a, int n, int v) {
    int lo = 0;
    int hi = n - 1;
    /*@
      loop invariant 0 <= lo && hi < n;
      loop invariant \forall integer k; 0 <= k < lo ==> a[k] < v;
      loop invariant \forall integer k; hi < k < n ==> a[k] > v;
      loop assigns lo, hi;
      loop variant hi - lo;
    */
    while (lo <= hi) {
        int mid = lo + (hi - lo) / 2;
        if (a[mid] == v)
            return mid;
        if (a[mid] < v)
            lo = mid + 1;
        else
            hi = mid - 1;
    }
    return -1;
}
