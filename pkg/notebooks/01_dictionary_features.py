"""
Dictionary features from bi-directional maximum matching
========================================================

A typed lexicon is matched against each clause twice, greedily from the
left and from the right. The segmentation with fewer pieces wins; ties go
to fewer single characters, then to the right-to-left pass. Matched
segments become BIEOS features, everything else is "None".
"""

# %%
from rdcnn import Lexicon, bdmm_segment, dict_features, split_clauses
from rdcnn.dictionary import backward_max_match, forward_max_match

text = "腹平坦，未见腹壁静脉曲张。"
lexicon = Lexicon({"静脉曲张": "symptom", "腹壁": "body"})

# %% [markdown]
# Clauses are cut after each comma, so features never straddle one.

# %%
for clause in split_clauses(text):
    print(clause.offset, clause.text)
    for ch, feat in zip(clause.text, dict_features(clause, lexicon)):
        print(f"  {ch}\t{feat}")

# %% [markdown]
# When the two passes disagree the preference rule decides. Here both
# "ab" and "bc" are entries; each pass finds one of them and leaves one
# single character, so the backward result is kept.

# %%
toy = Lexicon({"ab": "disease", "bc": "disease"})
print("forward ", forward_max_match("abc", toy))
print("backward", backward_max_match("abc", toy))
print("chosen  ", bdmm_segment("abc", toy))
