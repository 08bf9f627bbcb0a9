# %% [markdown]
# # Scoring with cpWER
#
# The hypothesis is split into channels at `<cc>`, and every assignment
# of channels to reference speakers is tried. The best one sets the score.

# %%
from sasot.metrics import score_records

refs = {"spk1": "the sunbeams shine on us take care of it", "spk2": "please hold on while I check"}
correct = "the sunbeams <cc> please hold <cc> shine on us <cc> on while <cc> take care of it <cc> I check"
wrong = "please hold <cc> the sunbeams <cc> shine on us <cc> on while take care <cc> of it <cc> I check"

for name, hyp in [("correct", correct), ("misassigned", wrong)]:
    rep = score_records([{"utt_id": name, "refs": refs, "hyp": hyp}])
    print(f"{name:12s} cpWER {rep['overall_cpwer']:.3f}", rep["totals"])

# %% [markdown]
# Channel order does not matter.

# %%
print(score_records([{"refs": refs, "hyp": "<cc> " + correct}])["overall_cpwer"])
