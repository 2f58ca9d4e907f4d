_.convert  # unused method (plunet/main.py:46)
ctx  # unused variable (plunet/main.py:46)
param  # unused variable (plunet/main.py:46)
describe  # unused function (plunet/main.py:72)
train  # unused function (plunet/main.py:97)
eval_  # unused function (plunet/main.py:139)
predict  # unused function (plunet/main.py:160)
gradcheck  # unused function (plunet/main.py:174)
synth  # unused function (plunet/main.py:189)
compare  # unused function (plunet/main.py:205)
main_callback  # unused function (plunet/main.py:227)
