/*@
  predicate valid_string(char *s) =
    \exists integer n; n >= 0 && \valid_read(s + (0 .. n)) && s[n] == 0;
*/

/*@
  requires valid_string(s);
  assigns \nothing;
  ensures \result >= 0;
  ensures s[\result] == 0;
*/
int string_length(const char *s) {
    int n = 0;
    /*@
      loop invariant n >= 0;
      loop invariant \forall integer k; 0 <= k < n ==> s[k] != 0;
      loop assigns n;
    */
    while (s[n] != 0)
        n++;
    return n;
}
