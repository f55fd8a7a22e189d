# u_y = f(x, y, u, u_x)
system cartan_single
indep x, y
dep u
func f(4)
eq D2(u) = f(x, y, u, D1(u))
query cartan
