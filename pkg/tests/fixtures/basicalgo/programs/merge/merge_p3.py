def merge(S1, S2):
    res = ""
    m = min(len(S1), len(S2))
    for i in range(m):
        res += S1[i] + S2[i]
    if len(S1) > len(S2):
        res += S1[m:]
    else:
        res += S1[m:]
    return res


S1, S2 = input().split()
print(merge(S1, S2))
