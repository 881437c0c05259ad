/*@
  logic integer tri(integer n) = n <= 0 ? 0 : n + tri(n - 1);

  lemma tri_closed: \forall integer n; n >= 0 ==> 2 * tri(n) == n * (n + 1);
*/

/*@
  requires 0 <= n <= 1000;
  assigns \nothing;
  ensures \result == tri(n);
  ensures 2 * \result == n * (n + 1);
*/
int triangle_number(int n) {
    int s = 0;
    /*@
      loop invariant 0 <= i <= n + 1;
      loop invariant s == tri(i - 1);
      loop assigns i, s;
      loop variant n + 1 - i;
    */
    for (int i = 1; i <= n; i++)
        s += i;
    return s;
}
